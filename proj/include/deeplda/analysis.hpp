#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "deeplda/errors.hpp"
#include "deeplda/head.hpp"
#include "deeplda/rng.hpp"

namespace deeplda {

/// C(p) = integral of p^2 = sum_{i,j} pi_i pi_j N(mu_i - mu_j; 0, 2 Sigma),
/// written in the explicit form (4 pi)^{-d/2} |Sigma|^{-1/2}
/// sum pi_i pi_j exp(-1/4 |mu_i - mu_j|^2_{Sigma^{-1}}).
inline double information_potential(const LdaParams& p) {
  const int c_count = p.num_classes();
  const Vec pr = p.priors();
  const double log_4pi = kLog2Pi + 0.6931471805599453094;
  const double log_norm = -0.5 * p.latent_dim() * log_4pi - 0.5 * p.cov.log_det();
  double total = 0.0;
  for (int i = 0; i < c_count; ++i)
    for (int j = 0; j < c_count; ++j) {
      const double m2 = p.cov.mahalanobis_sq(sub(p.means[i], p.means[j]));
      total += pr[i] * pr[j] * std::exp(log_norm - 0.25 * m2);
    }
  return total;
}

/// Same quantity via the direct double sum over N(mu_i - mu_j; 0, 2 Sigma),
/// materializing 2 Sigma and refactoring it. Kept as an independent code path
/// so the two can be cross-checked.
inline double information_potential_double_sum(const LdaParams& p) {
  const int c_count = p.num_classes();
  const Vec pr = p.priors();
  Matrix two_sigma = p.cov.sigma_matrix();
  for (double& v : two_sigma.data()) v *= 2.0;
  const Matrix chol = cholesky(two_sigma);
  double total = 0.0;
  for (int i = 0; i < c_count; ++i)
    for (int j = 0; j < c_count; ++j)
      total += pr[i] * pr[j] *
               std::exp(gaussian_log_pdf_chol(sub(p.means[i], p.means[j]), chol));
  return total;
}

/// integral of p q = sum_{i,j} pi_i^p pi_j^q N(mu_i^p - mu_j^q; 0, Sigma_p + Sigma_q).
inline double cross_overlap_closed_form(const LdaParams& p, const LdaParams& q) {
  if (p.latent_dim() != q.latent_dim())
    throw DimensionMismatch("cross_overlap: mixtures live in different dimensions");
  Matrix sum_sigma = p.cov.sigma_matrix();
  const Matrix q_sigma = q.cov.sigma_matrix();
  for (size_t k = 0; k < sum_sigma.data().size(); ++k) sum_sigma.data()[k] += q_sigma.data()[k];
  const Matrix chol = cholesky(sum_sigma);
  const Vec pr_p = p.priors();
  const Vec pr_q = q.priors();
  double total = 0.0;
  for (int i = 0; i < p.num_classes(); ++i)
    for (int j = 0; j < q.num_classes(); ++j)
      total += pr_p[i] * pr_q[j] *
               std::exp(gaussian_log_pdf_chol(sub(p.means[i], q.means[j]), chol));
  return total;
}

/// |p|_inf <= (2 pi)^{-d/2} (det Sigma)^{-1/2}, attained by a single component.
inline double linf_bound(const LdaParams& p) {
  return std::exp(-0.5 * p.latent_dim() * kLog2Pi - 0.5 * p.cov.log_det());
}

struct McEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
  size_t n = 0;
};

namespace detail {
/// Mean and standard error with the population-variance (divide by n)
/// convention, so exact duplication of the data scales std_err by 1/sqrt(2).
inline McEstimate mc_reduce(const Vec& values) {
  McEstimate e;
  e.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  e.estimate = sum / static_cast<double>(e.n);
  double ss = 0.0;
  for (double v : values) ss += (v - e.estimate) * (v - e.estimate);
  e.std_err = std::sqrt(ss / static_cast<double>(e.n)) / std::sqrt(static_cast<double>(e.n));
  return e;
}
}  // namespace detail

/// Sample mean and standard error of p_theta(z_i) over the given embeddings:
/// the empirical counterpart of the information potential.
inline McEstimate mc_mean_model_density(const std::vector<Vec>& data, const LdaParams& params) {
  if (data.empty()) throw EmptyDataset("mc_mean_model_density: no data");
  Vec vals(data.size());
  for (size_t i = 0; i < data.size(); ++i) vals[i] = mixture_density(params, data[i]);
  return detail::mc_reduce(vals);
}

/// Unbiased MC estimate of KL(p || q) = E_{Z~p}[log p(Z) - log q(Z)]; both
/// mixture log densities are exact, only the expectation is sampled.
inline McEstimate kl_mc_estimate(const LdaParams& p, const LdaParams& q, size_t n, uint64_t seed) {
  if (p.latent_dim() != q.latent_dim())
    throw DimensionMismatch("kl_mc_estimate: mixtures live in different dimensions");
  if (n < 1000) throw std::invalid_argument("kl_mc_estimate: need at least 1e3 samples");
  Rng rng = make_rng(seed);
  Vec vals(n);
  for (size_t i = 0; i < n; ++i) {
    const Vec z = sample(p, rng).second;
    vals[i] = mixture_log_density(p, z) - mixture_log_density(q, z);
  }
  return detail::mc_reduce(vals);
}

struct OverlapReport {
  double closed_form_C = 0.0;        // information potential of the model
  double closed_form_cross = 0.0;    // integral of p_data * p_model
  double lhs = 0.0;                  // |cross - C|
  double mc_estimate_cross = 0.0;    // MC mean of p_model on Z ~ p_data
  double mc_std_err = 0.0;
  double linf_bound = 0.0;
  double kl_estimate = 0.0;
  double kl_std_err = 0.0;
  double bound_rhs = 0.0;
  double bound_rhs_std_err = 0.0;
  bool bound_satisfied = false;
  bool bound_uninformative = false;
  size_t mc_samples = 0;
};

inline nlohmann::json overlap_report_to_json(const OverlapReport& r) {
  return nlohmann::json{
      {"closed_form_C", r.closed_form_C},
      {"closed_form_cross", r.closed_form_cross},
      {"lhs", r.lhs},
      {"mc_estimate_cross", r.mc_estimate_cross},
      {"mc_std_err", r.mc_std_err},
      {"linf_bound", r.linf_bound},
      {"kl_estimate", r.kl_estimate},
      {"kl_std_err", r.kl_std_err},
      {"bound_rhs", r.bound_rhs},
      {"bound_rhs_std_err", r.bound_rhs_std_err},
      {"bound_satisfied", r.bound_satisfied},
      {"bound_uninformative", r.bound_uninformative},
      {"mc_samples", r.mc_samples}};
}

/// Checks |integral p p_theta - integral p_theta^2| <= |p_theta|_inf sqrt(2 KL(p || p_theta)).
/// The left side is exact (closed forms); the right side carries MC noise from
/// the KL estimate, propagated by the delta method and folded in at 3 sigma.
inline OverlapReport overlap_bound_check(const LdaParams& p_data, const LdaParams& p_model,
                                         size_t n, uint64_t seed) {
  if (p_data.latent_dim() != p_model.latent_dim())
    throw DimensionMismatch("overlap_bound_check: mixtures live in different dimensions");
  OverlapReport r;
  r.mc_samples = n;
  r.closed_form_C = information_potential(p_model);
  r.closed_form_cross = cross_overlap_closed_form(p_data, p_model);
  r.lhs = std::abs(r.closed_form_cross - r.closed_form_C);
  r.linf_bound = deeplda::linf_bound(p_model);

  // one sample stream feeds both the cross-density mean and the KL estimate
  Rng rng = make_rng(seed);
  Vec cross_vals(n), kl_vals(n);
  for (size_t i = 0; i < n; ++i) {
    const Vec z = sample(p_data, rng).second;
    const double log_pm = mixture_log_density(p_model, z);
    cross_vals[i] = std::exp(log_pm);
    kl_vals[i] = mixture_log_density(p_data, z) - log_pm;
  }
  const McEstimate cross = detail::mc_reduce(cross_vals);
  const McEstimate kl = detail::mc_reduce(kl_vals);
  r.mc_estimate_cross = cross.estimate;
  r.mc_std_err = cross.std_err;
  r.kl_estimate = kl.estimate;
  r.kl_std_err = kl.std_err;

  const double kl_floor = std::max(kl.estimate, 0.0);
  r.bound_rhs = r.linf_bound * std::sqrt(2.0 * kl_floor);
  // d/dKL of |p|_inf sqrt(2 KL) = |p|_inf / sqrt(2 KL); the KL in the
  // denominator is floored at its own standard error to keep the propagated
  // noise finite near KL = 0
  const double kl_for_se = std::max({kl.estimate, kl.std_err, 1e-300});
  r.bound_rhs_std_err = r.linf_bound * kl.std_err / std::sqrt(2.0 * kl_for_se);
  const double slack = 1e-10 * r.linf_bound;  // float-roundoff allowance for the exact-equality case
  r.bound_satisfied = r.lhs <= r.bound_rhs + 3.0 * r.bound_rhs_std_err + slack;
  r.bound_uninformative = r.bound_rhs > 1e4 * r.lhs;
  return r;
}

struct QuadratureSpec {
  size_t nodes = 20000;
  double span_sigmas = 10.0;
};

struct KlPair {
  double kl_joint = 0.0;
  double kl_marginal = 0.0;
};

/// Trapezoid-quadrature KL divergences for 1-D class-conditional models:
/// joint KL over (z, y) versus KL between the mixture marginals. The grid
/// covers every component's mean +- span_sigmas standard deviations.
inline KlPair kl_marginalization_check(const LdaParams& p, const LdaParams& q,
                                       const QuadratureSpec& spec = {}) {
  if (p.latent_dim() != 1 || q.latent_dim() != 1)
    throw DimensionMismatch("kl_marginalization_check: models must be 1-D");
  if (p.num_classes() != q.num_classes())
    throw DimensionMismatch("kl_marginalization_check: class counts differ");
  if (spec.nodes < 1000) throw GridTooCoarse("quadrature grid needs at least 1e3 nodes");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const LdaParams* m : {&p, &q}) {
    const double s = std::sqrt(m->cov.sigma_matrix()(0, 0));
    for (const Vec& mu : m->means) {
      lo = std::min(lo, mu[0] - spec.span_sigmas * s);
      hi = std::max(hi, mu[0] + spec.span_sigmas * s);
    }
  }
  const double h = (hi - lo) / static_cast<double>(spec.nodes - 1);
  const Vec logp_pr = p.log_priors();
  const Vec logq_pr = q.log_priors();

  KlPair out;
  for (size_t k = 0; k < spec.nodes; ++k) {
    const double w = (k == 0 || k + 1 == spec.nodes) ? 0.5 * h : h;
    const Vec z{lo + h * static_cast<double>(k)};
    double joint_term = 0.0;
    for (int y = 0; y < p.num_classes(); ++y) {
      const double lp = logp_pr[y] + gaussian_log_pdf(z, p.means[y], p.cov);
      const double lq = logq_pr[y] + gaussian_log_pdf(z, q.means[y], q.cov);
      const double pd = std::exp(lp);
      if (pd > 0.0) joint_term += pd * (lp - lq);
    }
    const double lp_mix = mixture_log_density(p, z);
    const double lq_mix = mixture_log_density(q, z);
    const double p_mix = std::exp(lp_mix);
    out.kl_joint += w * joint_term;
    if (p_mix > 0.0) out.kl_marginal += w * p_mix * (lp_mix - lq_mix);
  }
  return out;
}

struct PenaltyDiagnostic {
  double mean_model_density = 0.0;  // the density-penalty value on the data
  double std_err = 0.0;
  double linf_bound = 0.0;
  double inflation_factor = 0.0;  // (det Sigma)^{-1/2}
};

/// Reports how the empirical density penalty compares against its sup-norm
/// ceiling, and the determinant factor that inflates both as Sigma degenerates.
/// Purely descriptive: no inequality is asserted here.
inline PenaltyDiagnostic l2_penalty_diagnostic(const std::vector<Vec>& data,
                                               const LdaParams& params) {
  const McEstimate e = mc_mean_model_density(data, params);
  PenaltyDiagnostic d;
  d.mean_model_density = e.estimate;
  d.std_err = e.std_err;
  d.linf_bound = linf_bound(params);
  d.inflation_factor = std::exp(-0.5 * params.cov.log_det());
  return d;
}

}  // namespace deeplda
