#pragma once

#include <cmath>
#include <vector>

#include "deeplda/errors.hpp"
#include "deeplda/head.hpp"

namespace deeplda {

struct ObjectiveKind {
  enum class Tag { NLL, CrossEntropy, DNLL };
  Tag tag = Tag::NLL;
  double lambda = 0.0;

  static ObjectiveKind nll() { return {Tag::NLL, 0.0}; }
  static ObjectiveKind cross_entropy() { return {Tag::CrossEntropy, 0.0}; }
  static ObjectiveKind dnll(double lambda) {
    if (lambda < 0.0) throw NegativeLambda("dnll: lambda must be >= 0");
    return {Tag::DNLL, lambda};
  }
};

/// Gradient record laid out exactly like LdaParams.
struct HeadGrad {
  Vec prior_logits;
  std::vector<Vec> means;
  Vec cov_raw;

  static HeadGrad zeros_like(const LdaParams& p) {
    HeadGrad g;
    g.prior_logits.assign(p.prior_logits.size(), 0.0);
    g.means.assign(p.means.size(), Vec(p.latent_dim(), 0.0));
    g.cov_raw.assign(p.cov.raw().size(), 0.0);
    return g;
  }

  void add_scaled(double a, const HeadGrad& o) {
    for (size_t i = 0; i < prior_logits.size(); ++i) prior_logits[i] += a * o.prior_logits[i];
    for (size_t c = 0; c < means.size(); ++c)
      for (size_t i = 0; i < means[c].size(); ++i) means[c][i] += a * o.means[c][i];
    for (size_t i = 0; i < cov_raw.size(); ++i) cov_raw[i] += a * o.cov_raw[i];
  }

  bool all_entries_finite() const {
    if (!all_finite(prior_logits) || !all_finite(cov_raw)) return false;
    for (const Vec& m : means)
      if (!all_finite(m)) return false;
    return true;
  }
};

struct SampleResult {
  double value = 0.0;
  Vec grad_z;
  HeadGrad grad_params;
};

namespace detail {

/// Everything the backward pass needs about delta(z): per-class differences,
/// whitened differences w_c = L^{-1}(z - mu_c), and u_c = Sigma^{-1}(z - mu_c).
struct HeadCache {
  Vec delta;
  std::vector<Vec> diff, w, u;
  Vec mahal_sq;
  Vec priors;
};

inline HeadCache head_forward(const LdaParams& p, const Vec& z) {
  if (static_cast<int>(z.size()) != p.latent_dim())
    throw DimensionMismatch("loss: embedding length does not match latent dim");
  const int c_count = p.num_classes();
  HeadCache cache;
  cache.priors = p.priors();
  const Vec logp = p.log_priors();
  const double half_log_det = 0.5 * p.cov.log_det();
  cache.delta.resize(c_count);
  cache.mahal_sq.resize(c_count);
  cache.diff.resize(c_count);
  cache.w.resize(c_count);
  cache.u.resize(c_count);
  for (int c = 0; c < c_count; ++c) {
    cache.diff[c] = sub(z, p.means[c]);
    cache.w[c] = p.cov.whiten(cache.diff[c]);
    cache.u[c] = p.cov.sigma_inv_times(cache.diff[c]);
    cache.mahal_sq[c] = norm_sq(cache.w[c]);
    cache.delta[c] = logp[c] - half_log_det - 0.5 * cache.mahal_sq[c];
  }
  return cache;
}

/// Chain rule from grad_delta back to (z, prior_logits, means, covariance raw).
inline SampleResult head_backward(const LdaParams& p, const HeadCache& cache,
                                  const Vec& grad_delta, double value) {
  const int c_count = p.num_classes();
  const int d = p.latent_dim();
  SampleResult r;
  r.value = value;
  r.grad_params = HeadGrad::zeros_like(p);
  r.grad_z.assign(d, 0.0);

  double g_sum = 0.0;
  for (double g : grad_delta) g_sum += g;
  for (int c = 0; c < c_count; ++c)
    r.grad_params.prior_logits[c] = grad_delta[c] - g_sum * cache.priors[c];

  for (int c = 0; c < c_count; ++c) {
    const double g = grad_delta[c];
    for (int i = 0; i < d; ++i) {
      r.grad_params.means[c][i] += g * cache.u[c][i];
      r.grad_z[i] -= g * cache.u[c][i];
    }
  }

  Vec& gcov = r.grad_params.cov_raw;
  switch (p.cov.variant()) {
    case CovarianceParam::Variant::Spherical:
      for (int c = 0; c < c_count; ++c)
        gcov[0] += grad_delta[c] * (cache.mahal_sq[c] - d);
      break;
    case CovarianceParam::Variant::Diagonal:
      for (int c = 0; c < c_count; ++c)
        for (int k = 0; k < d; ++k)
          gcov[k] += grad_delta[c] * (cache.u[c][k] * cache.diff[c][k] - 1.0);
      break;
    case CovarianceParam::Variant::FullCholesky: {
      for (int i = 0; i < d; ++i) {
        const double l_ii = std::exp(p.cov.raw()[CovarianceParam::tri_index(i, i)]);
        for (int c = 0; c < c_count; ++c) {
          const double g = grad_delta[c];
          for (int j = 0; j < i; ++j)
            gcov[CovarianceParam::tri_index(i, j)] += g * cache.u[c][i] * cache.w[c][j];
          gcov[CovarianceParam::tri_index(i, i)] += g * (cache.u[c][i] * cache.w[c][i] * l_ii - 1.0);
        }
      }
      break;
    }
  }
  return r;
}

inline void check_label(int y, int num_classes) {
  if (y < 0 || y >= num_classes) throw InvalidLabel("label out of range");
}

}  // namespace detail

/// -log(pi_y phi(z; mu_y, Sigma)) = -delta_y(z) + (d/2) log(2 pi).
inline SampleResult nll(const LdaParams& p, const Vec& z, int y) {
  detail::check_label(y, p.num_classes());
  const detail::HeadCache cache = detail::head_forward(p, z);
  Vec g(p.num_classes(), 0.0);
  g[y] = -1.0;
  const double value = -cache.delta[y] + 0.5 * p.latent_dim() * kLog2Pi;
  return detail::head_backward(p, cache, g, value);
}

/// -log posterior_y = -delta_y + logsumexp(delta).
inline SampleResult cross_entropy(const LdaParams& p, const Vec& z, int y) {
  detail::check_label(y, p.num_classes());
  const detail::HeadCache cache = detail::head_forward(p, z);
  Vec g = softmax(cache.delta);
  g[y] -= 1.0;
  const double value = -cache.delta[y] + log_sum_exp(cache.delta);
  return detail::head_backward(p, cache, g, value);
}

/// Gradient of the cross-entropy loss with respect to the discriminants:
/// softmax(delta) - e_y.
inline Vec ce_grad_wrt_discriminants(const Vec& delta, int y) {
  detail::check_label(y, static_cast<int>(delta.size()));
  Vec g = softmax(delta);
  g[y] -= 1.0;
  return g;
}

/// Gradient of the penalized objective with respect to the discriminants,
/// computed from the closed form lambda * exp(delta) - e_y.
inline Vec dnll_grad_wrt_discriminants(const Vec& delta, int y, double lambda) {
  detail::check_label(y, static_cast<int>(delta.size()));
  if (lambda < 0.0) throw NegativeLambda("dnll: lambda must be >= 0");
  Vec g(delta.size());
  for (size_t c = 0; c < delta.size(); ++c) g[c] = lambda * std::exp(delta[c]);
  g[y] -= 1.0;
  return g;
}

/// -delta_y(z) + lambda * sum_c exp(delta_c(z)). The exp terms are evaluated
/// directly in f64: if the discriminants blow up the value overflows to inf,
/// which callers surface instead of masking.
inline SampleResult dnll(const LdaParams& p, const Vec& z, int y, double lambda) {
  detail::check_label(y, p.num_classes());
  if (lambda < 0.0) throw NegativeLambda("dnll: lambda must be >= 0");
  const detail::HeadCache cache = detail::head_forward(p, z);
  double penalty = 0.0;
  for (double d : cache.delta) penalty += std::exp(d);
  const double value = -cache.delta[y] + lambda * penalty;
  const Vec g = dnll_grad_wrt_discriminants(cache.delta, y, lambda);
  return detail::head_backward(p, cache, g, value);
}

inline SampleResult sample_loss(const LdaParams& p, const Vec& z, int y, const ObjectiveKind& kind) {
  switch (kind.tag) {
    case ObjectiveKind::Tag::NLL: return nll(p, z, y);
    case ObjectiveKind::Tag::CrossEntropy: return cross_entropy(p, z, y);
    case ObjectiveKind::Tag::DNLL: return dnll(p, z, y, kind.lambda);
  }
  throw std::logic_error("unreachable objective tag");
}

struct LossBatchResult {
  double value = 0.0;
  std::vector<Vec> grad_embeddings;
  HeadGrad grad_params;
};

/// Mean loss and mean gradients over the batch, accumulated sequentially in
/// sample order. A non-finite loss value (the collapse regime) raises
/// NonFiniteLoss rather than propagating inf/nan into the optimizer.
inline LossBatchResult batch_loss(const LdaParams& p, const std::vector<Vec>& embeddings,
                                  const std::vector<int>& labels, const ObjectiveKind& kind) {
  if (embeddings.empty()) throw EmptyBatch("batch_loss: empty batch");
  if (embeddings.size() != labels.size())
    throw DimensionMismatch("batch_loss: embeddings and labels differ in length");
  const double inv_n = 1.0 / static_cast<double>(embeddings.size());
  LossBatchResult out;
  out.grad_params = HeadGrad::zeros_like(p);
  out.grad_embeddings.resize(embeddings.size());
  for (size_t i = 0; i < embeddings.size(); ++i) {
    SampleResult s = sample_loss(p, embeddings[i], labels[i], kind);
    out.value += inv_n * s.value;
    out.grad_params.add_scaled(inv_n, s.grad_params);
    for (double& g : s.grad_z) g *= inv_n;
    out.grad_embeddings[i] = std::move(s.grad_z);
  }
  if (!std::isfinite(out.value))
    throw NonFiniteLoss("batch loss is not finite (covariance collapse)");
  return out;
}

}  // namespace deeplda
