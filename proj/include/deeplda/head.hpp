#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deeplda/covariance.hpp"
#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"
#include "deeplda/rng.hpp"

namespace deeplda {

/// Gaussian class-conditional model with shared covariance: class priors come
/// from softmax over free logits, class means live in latent space, and the
/// covariance is one of the CovarianceParam variants.
struct LdaParams {
  Vec prior_logits;
  std::vector<Vec> means;
  CovarianceParam cov;

  int num_classes() const { return static_cast<int>(prior_logits.size()); }
  int latent_dim() const { return cov.dim(); }

  Vec priors() const { return softmax(prior_logits); }
  Vec log_priors() const { return log_softmax(prior_logits); }

  void check_consistent() const {
    if (static_cast<int>(means.size()) != num_classes())
      throw DimensionMismatch("LdaParams: one mean per class required");
    for (const Vec& m : means)
      if (static_cast<int>(m.size()) != cov.dim())
        throw DimensionMismatch("LdaParams: mean length does not match covariance dim");
  }
};

/// delta_c(z) = log pi_c - 1/2 log det Sigma - 1/2 (z-mu_c)^T Sigma^{-1} (z-mu_c).
/// The log-det term is constant across classes but kept so the discriminants
/// are the exact log joint densities up to the shared -(d/2) log(2 pi).
inline Vec discriminants(const LdaParams& p, const Vec& z) {
  if (static_cast<int>(z.size()) != p.latent_dim())
    throw DimensionMismatch("discriminants: input length does not match latent dim");
  const Vec logp = p.log_priors();
  const double half_log_det = 0.5 * p.cov.log_det();
  Vec d(p.num_classes());
  for (int c = 0; c < p.num_classes(); ++c)
    d[c] = logp[c] - half_log_det - 0.5 * p.cov.mahalanobis_sq(sub(z, p.means[c]));
  return d;
}

inline Vec posterior(const LdaParams& p, const Vec& z) {
  return softmax(discriminants(p, z));
}

/// Argmax of the discriminants; ties resolve to the lowest class index.
inline int predict(const LdaParams& p, const Vec& z) {
  const Vec d = discriminants(p, z);
  int best = 0;
  for (int c = 1; c < static_cast<int>(d.size()); ++c)
    if (d[c] > d[best]) best = c;
  return best;
}

/// Draw (y, z): label from the prior, then z = mu_y + L eps with eps drawn
/// coordinate by coordinate. The label is always drawn before the coordinates
/// so that streams stay reproducible.
inline std::pair<int, Vec> sample(const LdaParams& p, Rng& rng) {
  const int y = categorical(rng, p.priors());
  const int d = p.latent_dim();
  Vec eps(d);
  for (int i = 0; i < d; ++i) eps[i] = standard_normal(rng);
  const Matrix l = p.cov.chol_factor();
  Vec z = p.means[y];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) z[i] += l(i, j) * eps[j];
  return {y, std::move(z)};
}

struct LatentSample {
  std::vector<Vec> points;
  std::vector<int> labels;
};

inline LatentSample sample_dataset(const LdaParams& p, size_t n, uint64_t seed) {
  LatentSample out;
  out.points.reserve(n);
  out.labels.reserve(n);
  Rng rng = make_rng(seed);
  for (size_t i = 0; i < n; ++i) {
    auto [y, z] = sample(p, rng);
    out.points.push_back(std::move(z));
    out.labels.push_back(y);
  }
  return out;
}

inline double mixture_log_density(const LdaParams& p, const Vec& z) {
  const Vec logp = p.log_priors();
  Vec terms(p.num_classes());
  for (int c = 0; c < p.num_classes(); ++c)
    terms[c] = logp[c] + gaussian_log_pdf(z, p.means[c], p.cov);
  return log_sum_exp(terms);
}

inline double mixture_density(const LdaParams& p, const Vec& z) {
  return std::exp(mixture_log_density(p, z));
}

inline nlohmann::json params_to_json(const LdaParams& p) {
  nlohmann::json j;
  j["prior_logits"] = p.prior_logits;
  j["means"] = p.means;
  j["cov"] = {{"variant", p.cov.variant_name()}, {"values", p.cov.raw()}};
  j["dims"] = {{"num_classes", p.num_classes()}, {"latent_dim", p.latent_dim()}};
  return j;
}

inline LdaParams params_from_json(const nlohmann::json& j) {
  LdaParams p;
  p.prior_logits = j.at("prior_logits").get<Vec>();
  p.means = j.at("means").get<std::vector<Vec>>();
  const int dim = j.at("dims").at("latent_dim").get<int>();
  p.cov = CovarianceParam::from_raw(
      CovarianceParam::variant_from_name(j.at("cov").at("variant").get<std::string>()),
      dim, j.at("cov").at("values").get<Vec>());
  p.check_consistent();
  return p;
}

inline void save_params(const LdaParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << params_to_json(p).dump(2) << "\n";
}

inline LdaParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  return params_from_json(j);
}

}  // namespace deeplda
