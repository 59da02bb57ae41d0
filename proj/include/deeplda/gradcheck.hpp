#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "deeplda/encoder.hpp"
#include "deeplda/losses.hpp"
#include "deeplda/rng.hpp"
#include "deeplda/train.hpp"

namespace deeplda {

/// Central finite differences, the independent oracle every analytic gradient
/// in this library is anchored to.
inline Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, Vec x,
                                      double h = 1e-5) {
  Vec g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double hi = f(x);
    x[i] = saved - h;
    const double lo = f(x);
    x[i] = saved;
    g[i] = (hi - lo) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
}

struct GradCheckSuite {
  std::string name;
  int trials = 0;
  double max_rel_err = 0.0;
  double tolerance = 1e-5;

  bool pass() const { return max_rel_err < tolerance; }
};

namespace detail {

inline CovarianceParam random_cov(Rng& rng, int d, CovarianceParam::Variant variant) {
  Vec raw;
  switch (variant) {
    case CovarianceParam::Variant::Spherical:
      raw = {0.3 * standard_normal(rng)};
      break;
    case CovarianceParam::Variant::Diagonal:
      raw.resize(d);
      for (double& v : raw) v = 0.3 * standard_normal(rng);
      break;
    case CovarianceParam::Variant::FullCholesky:
      raw.resize(static_cast<size_t>(d) * (d + 1) / 2);
      for (double& v : raw) v = 0.3 * standard_normal(rng);
      break;
  }
  return CovarianceParam::from_raw(variant, d, std::move(raw));
}

/// Moderate random parameters: keeps losses and their third derivatives small
/// enough that the finite-difference oracle itself is accurate to ~1e-8.
inline LdaParams random_head(Rng& rng, int c_count, int d, CovarianceParam::Variant variant) {
  LdaParams p;
  p.prior_logits.resize(c_count);
  for (double& v : p.prior_logits) v = 0.5 * standard_normal(rng);
  p.means.assign(c_count, Vec(d));
  for (Vec& m : p.means)
    for (double& v : m) v = 1.5 * standard_normal(rng);
  p.cov = random_cov(rng, d, variant);
  return p;
}

inline ObjectiveKind random_objective(Rng& rng, int trial) {
  switch (trial % 3) {
    case 0: return ObjectiveKind::nll();
    case 1: return ObjectiveKind::cross_entropy();
    default: {
      const double lambdas[] = {0.0, 0.01, 0.1, 1.0};
      return ObjectiveKind::dnll(lambdas[uniform_index(rng, 4)]);
    }
  }
}

}  // namespace detail

/// Per-sample losses: flat vector is [prior_logits, means, cov raw, z]; the
/// analytic gradient of each objective under each covariance variant is
/// compared against central differences coordinate by coordinate.
inline GradCheckSuite grad_check_head_losses(int trials, uint64_t seed) {
  GradCheckSuite suite{"head-losses", trials, 0.0, 1e-5};
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(seed, static_cast<uint64_t>(trial));
    const int d = 1 + static_cast<int>(uniform_index(rng, 4));
    const int c_count = 2 + static_cast<int>(uniform_index(rng, 4));
    const auto variant = static_cast<CovarianceParam::Variant>(trial % 3);
    const LdaParams head = detail::random_head(rng, c_count, d, variant);
    const ObjectiveKind kind = detail::random_objective(rng, trial);
    Vec z(d);
    for (double& v : z) v = 1.5 * standard_normal(rng);
    const int y = static_cast<int>(uniform_index(rng, c_count));

    Vec flat;
    append_head(flat, head);
    flat.insert(flat.end(), z.begin(), z.end());

    const auto eval = [&](const Vec& x) {
      LdaParams p = head;
      const size_t pos = read_head(x, 0, p);
      const Vec zz(x.begin() + pos, x.end());
      return sample_loss(p, zz, y, kind).value;
    };
    const SampleResult res = sample_loss(head, z, y, kind);
    Vec analytic;
    append_head_grad(analytic, res.grad_params);
    analytic.insert(analytic.end(), res.grad_z.begin(), res.grad_z.end());
    const Vec fd = finite_difference_gradient(eval, flat);
    for (size_t i = 0; i < flat.size(); ++i)
      suite.max_rel_err = std::max(suite.max_rel_err, rel_err(analytic[i], fd[i]));
  }
  return suite;
}

/// Full pipeline: random 2-layer ReLU encoder feeding a random head, every
/// encoder and head parameter differentiated end to end. Configurations whose
/// hidden pre-activations sit within 1e-3 of the ReLU kink are resampled,
/// since central differences are invalid across the kink.
inline GradCheckSuite grad_check_pipeline(int trials, uint64_t seed) {
  GradCheckSuite suite{"pipeline", trials, 0.0, 1e-5};
  const int input_dim = 2, hidden = 8, latent = 2, c_count = 3;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(seed, 100000 + static_cast<uint64_t>(trial));
    Encoder enc;
    Vec x(input_dim);
    bool near_kink = true;
    while (near_kink) {
      enc = make_mlp({input_dim, hidden, latent}, rng);
      for (double& v : x) v = 1.5 * standard_normal(rng);
      near_kink = false;
      const EncoderCache cache = encoder_forward(enc, x);
      for (double a : cache.pre_act[0])
        if (std::abs(a) < 1e-3) near_kink = true;
    }
    const auto variant = static_cast<CovarianceParam::Variant>(trial % 3);
    const LdaParams head = detail::random_head(rng, c_count, latent, variant);
    const ObjectiveKind kind = detail::random_objective(rng, trial);
    const int y = static_cast<int>(uniform_index(rng, c_count));

    Vec flat;
    append_encoder(flat, enc);
    append_head(flat, head);

    const auto eval = [&](const Vec& v) {
      Encoder e = enc;
      LdaParams p = head;
      size_t pos = read_encoder(v, 0, e);
      read_head(v, pos, p);
      return sample_loss(p, encoder_forward(e, x).output, y, kind).value;
    };

    const EncoderCache cache = encoder_forward(enc, x);
    const SampleResult res = sample_loss(head, cache.output, y, kind);
    const EncoderGrad enc_grad = encoder_backward(enc, cache, res.grad_z);
    Vec analytic;
    append_encoder_grad(analytic, enc_grad);
    append_head_grad(analytic, res.grad_params);

    const Vec fd = finite_difference_gradient(eval, flat);
    for (size_t i = 0; i < flat.size(); ++i)
      suite.max_rel_err = std::max(suite.max_rel_err, rel_err(analytic[i], fd[i]));
  }
  return suite;
}

/// The closed-form gradient of the penalized objective with respect to the
/// discriminants against the same gradient assembled term by term (data term
/// and penalty term differentiated separately, then summed).
inline GradCheckSuite grad_check_dnll_identity(int trials, uint64_t seed) {
  GradCheckSuite suite{"dnll-identity", trials, 0.0, 1e-10};
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(seed, 200000 + static_cast<uint64_t>(trial));
    const int c_count = 2 + static_cast<int>(uniform_index(rng, 4));
    Vec delta(c_count);
    for (double& v : delta) v = 2.0 * standard_normal(rng);
    const int y = static_cast<int>(uniform_index(rng, c_count));
    const double lambda = std::exp(std::log(1e-4) * uniform_unit(rng));  // in (1e-4, 1]

    const Vec closed = dnll_grad_wrt_discriminants(delta, y, lambda);
    Vec composed(c_count, 0.0);
    composed[y] -= 1.0;  // d/d delta of the -delta_y data term
    for (int c = 0; c < c_count; ++c) composed[c] += lambda * std::exp(delta[c]);
    for (int c = 0; c < c_count; ++c)
      suite.max_rel_err = std::max(suite.max_rel_err, std::abs(closed[c] - composed[c]));
  }
  return suite;
}

struct GradCheckReport {
  std::vector<GradCheckSuite> suites;

  bool pass() const {
    for (const GradCheckSuite& s : suites)
      if (!s.pass()) return false;
    return true;
  }
};

inline GradCheckReport run_grad_check(int trials, uint64_t seed) {
  GradCheckReport rep;
  rep.suites.push_back(grad_check_head_losses(trials, seed));
  rep.suites.push_back(grad_check_pipeline(trials, seed));
  rep.suites.push_back(grad_check_dnll_identity(std::max(trials, 1000), seed));
  return rep;
}

}  // namespace deeplda
