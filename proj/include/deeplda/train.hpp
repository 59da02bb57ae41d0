#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeplda/adam.hpp"
#include "deeplda/dataset.hpp"
#include "deeplda/encoder.hpp"
#include "deeplda/errors.hpp"
#include "deeplda/losses.hpp"
#include "deeplda/rng.hpp"

namespace deeplda {

struct TrainConfig {
  ObjectiveKind objective;
  int epochs = 100;
  int batch_size = 256;
  int eval_batch_size = 1024;
  AdamConfig adam;
  uint64_t seed = 1;
  bool shuffle = true;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (eval_batch_size < 1) throw std::invalid_argument("train config: eval_batch_size must be >= 1");
    if (adam.learning_rate <= 0 || adam.epsilon <= 0 ||
        adam.beta1 <= 0 || adam.beta1 >= 1 || adam.beta2 <= 0 || adam.beta2 >= 1)
      throw std::invalid_argument("train config: bad Adam hyperparameters");
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  double det_sigma = 0.0;
  double sigma = std::numeric_limits<double>::quiet_NaN();  // spherical heads only
  double min_mean_dist = 0.0;  // min pairwise Mahalanobis distance between means
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  int collapse_epoch = -1;  // epoch whose update hit a non-finite loss, -1 if none

  bool collapsed() const { return collapse_epoch >= 0; }
};

inline void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,loss,train_acc,det_sigma,sigma,min_mean_dist\n";
  for (const EpochRecord& r : trace.epochs)
    out << r.epoch << "," << format_double(r.mean_loss) << "," << format_double(r.train_accuracy)
        << "," << format_double(r.det_sigma) << "," << format_double(r.sigma) << ","
        << format_double(r.min_mean_dist) << "\n";
}

/// Uniform priors, means drawn i.i.d. N(0, 36/(2d)) per coordinate, identity-scale
/// covariance (sigma = 1 for spherical).
inline LdaParams init_head(int num_classes, int dim, uint64_t seed,
                           CovarianceParam::Variant variant = CovarianceParam::Variant::Spherical) {
  if (num_classes < 1 || dim < 1)
    throw std::invalid_argument("init_head: need num_classes >= 1 and dim >= 1");
  LdaParams p;
  p.prior_logits.assign(num_classes, 0.0);
  Rng rng = make_rng(seed, 3);  // stream 3: head init (0/1 are data, 2 is encoder init)
  const double stddev = 6.0 / std::sqrt(2.0 * dim);
  p.means.assign(num_classes, Vec(dim, 0.0));
  for (int c = 0; c < num_classes; ++c)
    for (int i = 0; i < dim; ++i) p.means[c][i] = stddev * standard_normal(rng);
  switch (variant) {
    case CovarianceParam::Variant::Spherical: p.cov = CovarianceParam::spherical(dim); break;
    case CovarianceParam::Variant::Diagonal: p.cov = CovarianceParam::diagonal_identity(dim); break;
    case CovarianceParam::Variant::FullCholesky: p.cov = CovarianceParam::full_identity(dim); break;
  }
  return p;
}

// Flat parameter layout used by the Adam loop: prior logits, means class by
// class, covariance raw values; encoders contribute weight rows then bias per
// layer, before the head block.

inline void append_head(Vec& flat, const LdaParams& p) {
  flat.insert(flat.end(), p.prior_logits.begin(), p.prior_logits.end());
  for (const Vec& m : p.means) flat.insert(flat.end(), m.begin(), m.end());
  flat.insert(flat.end(), p.cov.raw().begin(), p.cov.raw().end());
}

inline void append_head_grad(Vec& flat, const HeadGrad& g) {
  flat.insert(flat.end(), g.prior_logits.begin(), g.prior_logits.end());
  for (const Vec& m : g.means) flat.insert(flat.end(), m.begin(), m.end());
  flat.insert(flat.end(), g.cov_raw.begin(), g.cov_raw.end());
}

inline size_t read_head(const Vec& flat, size_t pos, LdaParams& p) {
  for (double& v : p.prior_logits) v = flat[pos++];
  for (Vec& m : p.means)
    for (double& v : m) v = flat[pos++];
  for (double& v : p.cov.raw()) v = flat[pos++];
  return pos;
}

inline void append_encoder(Vec& flat, const Encoder& e) {
  for (const EncoderLayer& l : e.layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
}

inline void append_encoder_grad(Vec& flat, const EncoderGrad& g) {
  for (size_t l = 0; l < g.weights.size(); ++l) {
    flat.insert(flat.end(), g.weights[l].data().begin(), g.weights[l].data().end());
    flat.insert(flat.end(), g.biases[l].begin(), g.biases[l].end());
  }
}

inline size_t read_encoder(const Vec& flat, size_t pos, Encoder& e) {
  for (EncoderLayer& l : e.layers) {
    for (double& v : l.weight.data()) v = flat[pos++];
    for (double& v : l.bias) v = flat[pos++];
  }
  return pos;
}

inline double min_pairwise_mean_dist(const LdaParams& p) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.num_classes(); ++i)
    for (int j = i + 1; j < p.num_classes(); ++j)
      best = std::min(best, std::sqrt(p.cov.mahalanobis_sq(sub(p.means[i], p.means[j]))));
  return best;
}

inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch, bool shuffle) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  if (shuffle) {
    Rng rng = make_rng(seed, 1000 + static_cast<uint64_t>(epoch));
    fisher_yates(order, rng);
  }
  return order;
}

inline double head_accuracy(const LdaParams& p, const Dataset& data, int eval_batch_size) {
  size_t correct = 0;
  for (size_t start = 0; start < data.size(); start += eval_batch_size)
    for (size_t i = start; i < std::min(data.size(), start + eval_batch_size); ++i)
      if (predict(p, data.points[i]) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline Vec encode(const Encoder& enc, const Vec& x) { return encoder_forward(enc, x).output; }

inline double deep_accuracy(const Encoder& enc, const LdaParams& p, const Dataset& data,
                            int eval_batch_size) {
  size_t correct = 0;
  for (size_t start = 0; start < data.size(); start += eval_batch_size)
    for (size_t i = start; i < std::min(data.size(), start + eval_batch_size); ++i)
      if (predict(p, encode(enc, data.points[i])) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline EpochRecord make_epoch_record(int epoch, double mean_loss, double accuracy,
                                     const LdaParams& p) {
  EpochRecord r;
  r.epoch = epoch;
  r.mean_loss = mean_loss;
  r.train_accuracy = accuracy;
  r.det_sigma = p.cov.det();
  if (p.cov.variant() == CovarianceParam::Variant::Spherical) r.sigma = p.cov.spherical_sigma();
  r.min_mean_dist = min_pairwise_mean_dist(p);
  return r;
}

struct ClassicalFit {
  LdaParams params;
  TrainTrace trace;
};

/// Minibatch optimization of the head alone; embeddings are the raw inputs.
inline ClassicalFit fit_classical(const Dataset& data, const LdaParams& init,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw EmptyDataset("fit_classical: empty dataset");
  if (data.dim() != init.latent_dim())
    throw DimensionMismatch("fit_classical: data dim does not match head latent dim");
  init.check_consistent();

  ClassicalFit fit{init, {}};
  Vec flat;
  append_head(flat, fit.params);
  AdamState state(flat.size());

  const size_t n = data.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(n, cfg.seed, epoch, cfg.shuffle);
    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<Vec> xs;
      std::vector<int> ys;
      xs.reserve(stop - start);
      for (size_t k = start; k < stop; ++k) {
        xs.push_back(data.points[order[k]]);
        ys.push_back(data.labels[order[k]]);
      }
      LossBatchResult batch;
      try {
        batch = batch_loss(fit.params, xs, ys, cfg.objective);
      } catch (const NonFiniteLoss&) {
        fit.trace.collapse_epoch = epoch;
        return fit;
      }
      loss_sum += batch.value * static_cast<double>(xs.size());
      Vec grad;
      append_head_grad(grad, batch.grad_params);
      adam_step(flat, grad, state, cfg.adam);
      read_head(flat, 0, fit.params);
    }
    fit.trace.epochs.push_back(make_epoch_record(
        epoch, loss_sum / static_cast<double>(n),
        head_accuracy(fit.params, data, cfg.eval_batch_size), fit.params));
  }
  return fit;
}

struct DeepFit {
  Encoder encoder;
  LdaParams params;
  TrainTrace trace;
};

/// Joint minibatch optimization of encoder and head.
inline DeepFit fit_deep(const Dataset& data, const Encoder& enc, const LdaParams& head,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw EmptyDataset("fit_deep: empty dataset");
  enc.check_consistent();
  head.check_consistent();
  if (data.dim() != enc.input_dim())
    throw DimensionMismatch("fit_deep: data dim does not match encoder input dim");
  if (enc.latent_dim() != head.latent_dim())
    throw DimensionMismatch("fit_deep: encoder output dim does not match head latent dim");

  DeepFit fit{enc, head, {}};
  Vec flat;
  append_encoder(flat, fit.encoder);
  append_head(flat, fit.params);
  AdamState state(flat.size());

  const size_t n = data.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(n, cfg.seed, epoch, cfg.shuffle);
    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<EncoderCache> caches;
      std::vector<Vec> zs;
      std::vector<int> ys;
      caches.reserve(stop - start);
      for (size_t k = start; k < stop; ++k) {
        caches.push_back(encoder_forward(fit.encoder, data.points[order[k]]));
        zs.push_back(caches.back().output);
        ys.push_back(data.labels[order[k]]);
      }
      LossBatchResult batch;
      try {
        batch = batch_loss(fit.params, zs, ys, cfg.objective);
      } catch (const NonFiniteLoss&) {
        fit.trace.collapse_epoch = epoch;
        return fit;
      }
      loss_sum += batch.value * static_cast<double>(zs.size());
      EncoderGrad enc_grad = EncoderGrad::zeros_like(fit.encoder);
      for (size_t i = 0; i < zs.size(); ++i)
        enc_grad.add_scaled(1.0, encoder_backward(fit.encoder, caches[i], batch.grad_embeddings[i]));
      Vec grad;
      append_encoder_grad(grad, enc_grad);
      append_head_grad(grad, batch.grad_params);
      adam_step(flat, grad, state, cfg.adam);
      size_t pos = read_encoder(flat, 0, fit.encoder);
      read_head(flat, pos, fit.params);
    }
    fit.trace.epochs.push_back(make_epoch_record(
        epoch, loss_sum / static_cast<double>(n),
        deep_accuracy(fit.encoder, fit.params, data, cfg.eval_batch_size), fit.params));
  }
  return fit;
}

struct SoftmaxFit {
  Encoder net;  // final layer emits C logits
  TrainTrace trace;
};

inline Vec softmax_net_posterior(const Encoder& net, const Vec& x) {
  return softmax(encode(net, x));
}

inline int softmax_net_predict(const Encoder& net, const Vec& x) {
  const Vec logits = encode(net, x);
  int best = 0;
  for (size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = static_cast<int>(c);
  return best;
}

inline double softmax_net_accuracy(const Encoder& net, const Dataset& data, int eval_batch_size) {
  size_t correct = 0;
  for (size_t start = 0; start < data.size(); start += eval_batch_size)
    for (size_t i = start; i < std::min(data.size(), start + eval_batch_size); ++i)
      if (softmax_net_predict(net, data.points[i]) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Baseline: the same encoder topped by an affine map to C logits, trained
/// with softmax cross-entropy on the logits.
inline SoftmaxFit fit_softmax_net(const Dataset& data, const Encoder& net, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw EmptyDataset("fit_softmax_net: empty dataset");
  net.check_consistent();
  if (data.dim() != net.input_dim())
    throw DimensionMismatch("fit_softmax_net: data dim does not match net input dim");
  if (net.latent_dim() != data.num_classes && data.num_classes > 0)
    throw DimensionMismatch("fit_softmax_net: net must emit one logit per class");

  SoftmaxFit fit{net, {}};
  Vec flat;
  append_encoder(flat, fit.net);
  AdamState state(flat.size());

  const size_t n = data.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(n, cfg.seed, epoch, cfg.shuffle);
    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      EncoderGrad net_grad = EncoderGrad::zeros_like(fit.net);
      double batch_loss_sum = 0.0;
      for (size_t k = start; k < stop; ++k) {
        const EncoderCache cache = encoder_forward(fit.net, data.points[order[k]]);
        const int y = data.labels[order[k]];
        batch_loss_sum += -cache.output[y] + log_sum_exp(cache.output);
        Vec g = softmax(cache.output);
        g[y] -= 1.0;
        for (double& v : g) v *= inv_b;
        net_grad.add_scaled(1.0, encoder_backward(fit.net, cache, g));
      }
      if (!std::isfinite(batch_loss_sum)) {
        fit.trace.collapse_epoch = epoch;
        return fit;
      }
      loss_sum += batch_loss_sum;
      Vec grad;
      append_encoder_grad(grad, net_grad);
      adam_step(flat, grad, state, cfg.adam);
      read_encoder(flat, 0, fit.net);
    }
    EpochRecord r;
    r.epoch = epoch;
    r.mean_loss = loss_sum / static_cast<double>(n);
    r.train_accuracy = softmax_net_accuracy(fit.net, data, cfg.eval_batch_size);
    r.det_sigma = nan;
    r.sigma = nan;
    r.min_mean_dist = nan;
    fit.trace.epochs.push_back(r);
  }
  return fit;
}

}  // namespace deeplda
