#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deeplda/analysis.hpp"
#include "deeplda/calibration.hpp"
#include "deeplda/dataset.hpp"
#include "deeplda/head.hpp"
#include "deeplda/plot.hpp"
#include "deeplda/train.hpp"

namespace deeplda {

struct SyntheticSpec {
  int num_classes = 3;
  int input_dim = 2;
  Vec priors;
  std::vector<Vec> means;
  Matrix sigma;
  size_t n_train = 20000;
  size_t n_test = 4000;
  uint64_t seed = 7;

  /// Three well-separated classes (Bayes accuracy > 99%).
  static SyntheticSpec well_separated() {
    SyntheticSpec s;
    s.priors = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    s.means = {{0.0, 0.0}, {6.0, 0.0}, {0.0, 6.0}};
    s.sigma = Matrix(2, 2);
    s.sigma(0, 0) = 1.0;
    s.sigma(0, 1) = 0.3;
    s.sigma(1, 0) = 0.3;
    s.sigma(1, 1) = 1.0;
    return s;
  }

  /// Means pulled toward each other (scaled by 0.35) so that Bayes accuracy
  /// drops to roughly 0.85 and confidence quality becomes measurable.
  static SyntheticSpec overlapping() {
    SyntheticSpec s = well_separated();
    for (Vec& m : s.means)
      for (double& v : m) v *= 0.35;
    return s;
  }
};

inline nlohmann::json spec_to_json(const SyntheticSpec& s) {
  nlohmann::json sigma = nlohmann::json::array();
  for (int i = 0; i < s.sigma.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < s.sigma.cols(); ++j) row.push_back(s.sigma(i, j));
    sigma.push_back(row);
  }
  return nlohmann::json{{"num_classes", s.num_classes}, {"input_dim", s.input_dim},
                        {"priors", s.priors},           {"means", s.means},
                        {"sigma", sigma},               {"n_train", s.n_train},
                        {"n_test", s.n_test},           {"seed", s.seed}};
}

inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_classes = j.at("num_classes").get<int>();
  s.input_dim = j.at("input_dim").get<int>();
  s.priors = j.at("priors").get<Vec>();
  s.means = j.at("means").get<std::vector<Vec>>();
  const auto rows = j.at("sigma").get<std::vector<Vec>>();
  s.sigma = Matrix(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t k = 0; k < rows[i].size(); ++k) s.sigma(static_cast<int>(i), static_cast<int>(k)) = rows[i][k];
  s.n_train = j.at("n_train").get<size_t>();
  s.n_test = j.at("n_test").get<size_t>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

inline SyntheticSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  return spec_from_json(j);
}

inline LdaParams ground_truth_params(const SyntheticSpec& s) {
  LdaParams p;
  p.prior_logits.resize(s.priors.size());
  for (size_t c = 0; c < s.priors.size(); ++c) p.prior_logits[c] = std::log(s.priors[c]);
  p.means = s.means;
  p.cov = CovarianceParam::from_sigma(s.sigma);
  p.check_consistent();
  return p;
}

struct SplitData {
  Dataset train, test;
};

/// Train and test come from disjoint RNG streams of the spec seed, so either
/// half can be regenerated independently.
inline SplitData gen_synthetic(const SyntheticSpec& spec) {
  const LdaParams gt = ground_truth_params(spec);
  SplitData out;
  out.train.num_classes = spec.num_classes;
  out.test.num_classes = spec.num_classes;
  Rng train_rng = make_rng(spec.seed, 0);
  for (size_t i = 0; i < spec.n_train; ++i) {
    auto [y, z] = sample(gt, train_rng);
    out.train.points.push_back(std::move(z));
    out.train.labels.push_back(y);
  }
  Rng test_rng = make_rng(spec.seed, 1);
  for (size_t i = 0; i < spec.n_test; ++i) {
    auto [y, z] = sample(gt, test_rng);
    out.test.points.push_back(std::move(z));
    out.test.labels.push_back(y);
  }
  return out;
}

/// Sample-statistics LDA estimate: class frequencies, class means, and the
/// pooled (divide by n) covariance. The maximum-likelihood solution in closed
/// form, used as the independent oracle for the iterative fits.
inline LdaParams closed_form_lda_fit(const Dataset& data) {
  if (data.size() == 0) throw EmptyDataset("closed_form_lda_fit: empty dataset");
  const int c_count = data.num_classes;
  const int d = data.dim();
  std::vector<size_t> counts(c_count, 0);
  std::vector<Vec> means(c_count, Vec(d, 0.0));
  for (size_t i = 0; i < data.size(); ++i) {
    counts[data.labels[i]] += 1;
    for (int k = 0; k < d; ++k) means[data.labels[i]][k] += data.points[i][k];
  }
  for (int c = 0; c < c_count; ++c)
    for (int k = 0; k < d; ++k) means[c][k] /= static_cast<double>(counts[c]);
  Matrix sigma(d, d);
  for (size_t i = 0; i < data.size(); ++i) {
    const Vec diff = sub(data.points[i], means[data.labels[i]]);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) sigma(a, b) += diff[a] * diff[b];
  }
  for (double& v : sigma.data()) v /= static_cast<double>(data.size());
  LdaParams p;
  p.prior_logits.resize(c_count);
  for (int c = 0; c < c_count; ++c)
    p.prior_logits[c] = std::log(static_cast<double>(counts[c]) / static_cast<double>(data.size()));
  p.means = std::move(means);
  p.cov = CovarianceParam::from_sigma(sigma);
  return p;
}

/// Greedy nearest-mean matching: all (estimate, reference) pairs sorted by
/// distance, assigned greedily. Returns match[r] = index of the estimate
/// assigned to reference class r.
inline std::vector<int> greedy_match(const std::vector<Vec>& est, const std::vector<Vec>& ref) {
  struct Pair {
    double dist;
    int e, r;
  };
  std::vector<Pair> pairs;
  for (size_t e = 0; e < est.size(); ++e)
    for (size_t r = 0; r < ref.size(); ++r)
      pairs.push_back({std::sqrt(norm_sq(sub(est[e], ref[r]))), static_cast<int>(e), static_cast<int>(r)});
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
  std::vector<int> match(ref.size(), -1);
  std::vector<bool> est_used(est.size(), false);
  for (const Pair& p : pairs) {
    if (match[p.r] >= 0 || est_used[p.e]) continue;
    match[p.r] = p.e;
    est_used[p.e] = true;
  }
  return match;
}

struct RecoveryError {
  Vec per_class_mean_err;   // l2 per reference class, after matching
  double max_mean_err = 0.0;
  double cov_frobenius_err = 0.0;
};

inline RecoveryError recovery_error(const LdaParams& fit, const LdaParams& reference) {
  RecoveryError r;
  const std::vector<int> match = greedy_match(fit.means, reference.means);
  r.per_class_mean_err.resize(reference.num_classes());
  for (int c = 0; c < reference.num_classes(); ++c) {
    r.per_class_mean_err[c] = std::sqrt(norm_sq(sub(fit.means[match[c]], reference.means[c])));
    r.max_mean_err = std::max(r.max_mean_err, r.per_class_mean_err[c]);
  }
  const Matrix sf = fit.cov.sigma_matrix();
  const Matrix sr = reference.cov.sigma_matrix();
  double frob = 0.0;
  for (size_t k = 0; k < sf.data().size(); ++k) {
    const double dv = sf.data()[k] - sr.data()[k];
    frob += dv * dv;
  }
  r.cov_frobenius_err = std::sqrt(frob);
  return r;
}

struct ExperimentResult {
  std::string id;
  nlohmann::json config;
  std::vector<uint64_t> seeds;
  std::vector<std::map<std::string, double>> per_seed;
  std::map<std::string, double> mean;
  std::map<std::string, double> twice_std;  // 2 * sample std over seeds
  std::map<std::string, double> summary;    // cross-seed derived scalars
  std::vector<std::string> artifacts;       // paths relative to the output dir
  bool ok = true;
  std::vector<std::string> failures;
};

inline void finalize_aggregates(ExperimentResult& r) {
  r.mean.clear();
  r.twice_std.clear();
  if (r.per_seed.empty()) return;
  const double n = static_cast<double>(r.per_seed.size());
  for (const auto& [key, first_val] : r.per_seed.front()) {
    (void)first_val;
    double sum = 0.0;
    for (const auto& m : r.per_seed) sum += m.at(key);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& m : r.per_seed) ss += (m.at(key) - mean) * (m.at(key) - mean);
    r.mean[key] = mean;
    r.twice_std[key] = (r.per_seed.size() > 1) ? 2.0 * std::sqrt(ss / (n - 1.0)) : 0.0;
  }
}

inline nlohmann::json result_to_json(const ExperimentResult& r) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& m : r.per_seed) per_seed.push_back(m);
  return nlohmann::json{{"id", r.id},
                        {"config", r.config},
                        {"seeds", r.seeds},
                        {"per_seed", per_seed},
                        {"aggregate", {{"mean", r.mean}, {"twice_std", r.twice_std}}},
                        {"summary", r.summary},
                        {"artifacts", r.artifacts},
                        {"ok", r.ok},
                        {"failures", r.failures}};
}

namespace detail {

inline std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline double median(Vec v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

inline Vec ranks_of(const Vec& xs) {
  std::vector<size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  Vec ranks(xs.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // average rank, 1-based
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation (average ranks on ties).
inline double spearman_rho(const Vec& xs, const Vec& ys) {
  if (xs.size() != ys.size()) throw LengthMismatch("spearman_rho: length mismatch");
  const Vec rx = detail::ranks_of(xs);
  const Vec ry = detail::ranks_of(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline std::vector<uint64_t> default_seeds(int n) {
  std::vector<uint64_t> s;
  for (int i = 1; i <= n; ++i) s.push_back(static_cast<uint64_t>(i));
  return s;
}

inline std::vector<Vec> encode_all(const Encoder& enc, const Dataset& data) {
  std::vector<Vec> zs(data.size());
  for (size_t i = 0; i < data.size(); ++i) zs[i] = encode(enc, data.points[i]);
  return zs;
}

inline CalibrationReport head_calibration(const LdaParams& p, const std::vector<Vec>& embeddings,
                                          const std::vector<int>& labels, int bins = 10) {
  std::vector<Vec> posteriors(embeddings.size());
  for (size_t i = 0; i < embeddings.size(); ++i) posteriors[i] = posterior(p, embeddings[i]);
  Vec conf;
  std::vector<bool> correct;
  confidence_outcomes(posteriors, labels, conf, correct);
  return calibration_report(conf, correct, bins);
}

// RNG stream conventions shared by all runners: a SyntheticSpec seed uses
// streams 0 (train) and 1 (test); a training seed uses stream 2 for encoder
// init, stream 3 inside init_head, stream 4 for extra baseline layers, and
// 1000+epoch for shuffling.

struct ClassicalRunConfig {
  SyntheticSpec spec = SyntheticSpec::well_separated();
  // ce needs the longer schedule: its covariance only starts shrinking once
  // the means have sorted themselves out, well after accuracy saturates
  int epochs = 300;
  int batch_size = 256;
  double learning_rate = 3e-3;
};

/// Maximum-likelihood vs cross-entropy head fitting on identical data: does
/// the optimizer recover the generating parameters?
inline ExperimentResult run_classical_consistency(const std::vector<uint64_t>& seeds,
                                                  const std::string& out_dir,
                                                  const ClassicalRunConfig& cfg = {}) {
  ExperimentResult result;
  result.id = "classical-consistency";
  result.seeds = seeds;
  result.config = {{"spec", spec_to_json(cfg.spec)},
                   {"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate}};
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (uint64_t seed : seeds) {
    SyntheticSpec spec = cfg.spec;
    spec.seed = seed;
    const SplitData data = gen_synthetic(spec);
    const LdaParams truth = ground_truth_params(spec);
    const LdaParams oracle = closed_form_lda_fit(data.train);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.adam.learning_rate = cfg.learning_rate;
    tc.seed = seed;
    const LdaParams init = init_head(spec.num_classes, spec.input_dim, seed,
                                     CovarianceParam::Variant::FullCholesky);

    std::map<std::string, double> metrics;
    std::map<std::string, ClassicalFit> fits;
    for (const auto& [name, kind] :
         std::vector<std::pair<std::string, ObjectiveKind>>{
             {"nll", ObjectiveKind::nll()}, {"ce", ObjectiveKind::cross_entropy()}}) {
      tc.objective = kind;
      ClassicalFit fit = fit_classical(data.train, init, tc);
      const RecoveryError rec = recovery_error(fit.params, truth);
      metrics[name + "_mean_err"] = rec.max_mean_err;
      metrics[name + "_cov_err"] = rec.cov_frobenius_err;
      metrics[name + "_train_acc"] = fit.trace.epochs.back().train_accuracy;
      metrics[name + "_test_acc"] = head_accuracy(fit.params, data.test, tc.eval_batch_size);
      metrics[name + "_det_sigma"] = fit.params.cov.det();
      if (!out_dir.empty()) {
        const std::string tag = name + "_seed" + std::to_string(seed);
        save_params(fit.params, detail::path_join(out_dir, "params_" + tag + ".json"));
        write_trace_csv(fit.trace, detail::path_join(out_dir, "trace_" + tag + ".csv"));
        svg_scatter(data.train.points, data.train.labels, fit.params.means,
                    detail::path_join(out_dir, "scatter_" + tag + ".svg"));
        result.artifacts.push_back("params_" + tag + ".json");
        result.artifacts.push_back("trace_" + tag + ".csv");
        result.artifacts.push_back("scatter_" + tag + ".svg");
      }
      fits.emplace(name, std::move(fit));
    }
    const RecoveryError vs_oracle = recovery_error(fits.at("nll").params, oracle);
    metrics["nll_oracle_mean_agree"] = vs_oracle.max_mean_err;
    metrics["nll_oracle_cov_agree"] = vs_oracle.cov_frobenius_err;
    if (!out_dir.empty()) {
      const std::string oracle_name = "params_oracle_seed" + std::to_string(seed) + ".json";
      save_params(oracle, detail::path_join(out_dir, oracle_name));
      result.artifacts.push_back(oracle_name);
    }

    if (!(metrics["nll_mean_err"] < metrics["ce_mean_err"])) {
      result.ok = false;
      result.failures.push_back("seed " + std::to_string(seed) +
                                ": NLL recovery error not below CE recovery error");
    }
    if (!(metrics["ce_det_sigma"] < metrics["nll_det_sigma"])) {
      result.ok = false;
      result.failures.push_back("seed " + std::to_string(seed) +
                                ": CE covariance determinant not below NLL's");
    }
    result.per_seed.push_back(std::move(metrics));
  }
  finalize_aggregates(result);
  return result;
}

struct DeepRunConfig {
  SyntheticSpec spec = SyntheticSpec::well_separated();
  int epochs = 100;
  int batch_size = 256;
  int eval_batch_size = 1024;
  double learning_rate = 1e-3;
  int hidden = 32;
  int latent_dim = 2;
  CovarianceParam::Variant head_variant = CovarianceParam::Variant::FullCholesky;
};

namespace detail {

struct CloudCheck {
  int means_outside = 0;  // learned means farther than 3 empirical std from their class centroid
};

/// Matches learned means to empirical class centroids (greedy), then compares
/// each matched mean's distance to the centroid against three times the
/// cloud's root-mean-square radius.
inline CloudCheck means_vs_clouds(const LdaParams& head, const std::vector<Vec>& embeddings,
                                  const std::vector<int>& labels) {
  const int c_count = head.num_classes();
  const int d = head.latent_dim();
  std::vector<Vec> centroid(c_count, Vec(d, 0.0));
  std::vector<size_t> count(c_count, 0);
  for (size_t i = 0; i < embeddings.size(); ++i) {
    count[labels[i]] += 1;
    for (int k = 0; k < d; ++k) centroid[labels[i]][k] += embeddings[i][k];
  }
  for (int c = 0; c < c_count; ++c)
    for (int k = 0; k < d; ++k) centroid[c][k] /= static_cast<double>(count[c]);
  Vec rms_sq(c_count, 0.0);
  for (size_t i = 0; i < embeddings.size(); ++i)
    rms_sq[labels[i]] += norm_sq(sub(embeddings[i], centroid[labels[i]]));
  for (int c = 0; c < c_count; ++c) rms_sq[c] /= static_cast<double>(count[c]);

  const std::vector<int> match = greedy_match(head.means, centroid);
  CloudCheck check;
  for (int c = 0; c < c_count; ++c)
    if (norm_sq(sub(head.means[match[c]], centroid[c])) > 9.0 * rms_sq[c])
      check.means_outside += 1;
  return check;
}

}  // namespace detail

/// One deep run per seed under the given objective: 2-layer ReLU encoder into
/// the LDA head, 100 epochs of Adam. Collapse (non-finite loss) is recorded,
/// not fatal.
inline ExperimentResult run_deep_comparison(const ObjectiveKind& objective,
                                            const std::vector<uint64_t>& seeds,
                                            const std::string& out_dir,
                                            const DeepRunConfig& cfg = {}) {
  ExperimentResult result;
  const char* obj_name = objective.tag == ObjectiveKind::Tag::NLL ? "nll"
                         : objective.tag == ObjectiveKind::Tag::CrossEntropy ? "ce"
                                                                             : "dnll";
  result.id = std::string("deep-") + obj_name;
  result.seeds = seeds;
  result.config = {{"spec", spec_to_json(cfg.spec)},
                   {"objective", obj_name},
                   {"lambda", objective.lambda},
                   {"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"hidden", cfg.hidden},
                   {"latent_dim", cfg.latent_dim}};
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const SplitData data = gen_synthetic(cfg.spec);
  for (uint64_t seed : seeds) {
    Rng enc_rng = make_rng(seed, 2);
    const Encoder enc0 = make_mlp({cfg.spec.input_dim, cfg.hidden, cfg.latent_dim}, enc_rng);
    const LdaParams head0 =
        init_head(cfg.spec.num_classes, cfg.latent_dim, seed, cfg.head_variant);
    TrainConfig tc;
    tc.objective = objective;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.eval_batch_size = cfg.eval_batch_size;
    tc.adam.learning_rate = cfg.learning_rate;
    tc.seed = seed;
    const DeepFit fit = fit_deep(data.train, enc0, head0, tc);

    const std::vector<Vec> test_z = encode_all(fit.encoder, data.test);
    std::map<std::string, double> metrics;
    metrics["train_acc"] = deep_accuracy(fit.encoder, fit.params, data.train, tc.eval_batch_size);
    metrics["test_acc"] = deep_accuracy(fit.encoder, fit.params, data.test, tc.eval_batch_size);
    metrics["det_sigma"] = fit.params.cov.det();
    metrics["collapsed"] = fit.trace.collapsed() ? 1.0 : 0.0;
    metrics["collapse_epoch"] = static_cast<double>(fit.trace.collapse_epoch);
    const detail::CloudCheck cloud = detail::means_vs_clouds(fit.params, test_z, data.test.labels);
    metrics["means_outside_cloud"] = static_cast<double>(cloud.means_outside);
    metrics["ece"] = head_calibration(fit.params, test_z, data.test.labels).ece;

    if (!out_dir.empty()) {
      const std::string tag = std::string(obj_name) + "_seed" + std::to_string(seed);
      save_params(fit.params, detail::path_join(out_dir, "params_" + tag + ".json"));
      write_trace_csv(fit.trace, detail::path_join(out_dir, "trace_" + tag + ".csv"));
      svg_scatter(test_z, data.test.labels, fit.params.means,
                  detail::path_join(out_dir, "latent_" + tag + ".svg"));
      result.artifacts.push_back("params_" + tag + ".json");
      result.artifacts.push_back("trace_" + tag + ".csv");
      result.artifacts.push_back("latent_" + tag + ".svg");
    }
    result.per_seed.push_back(std::move(metrics));
  }
  finalize_aggregates(result);
  return result;
}

/// DNLL with a spherical head across a lambda grid: smaller lambda should
/// yield sharper class-conditionals (smaller final sigma) at stable accuracy.
// The stationarity probe only means anything once training has settled; the
// smallest lambdas are slowest to get there, so the sweep runs longer than
// the head-to-head comparison.
inline DeepRunConfig sweep_run_defaults() {
  DeepRunConfig cfg;
  cfg.epochs = 250;
  return cfg;
}

inline ExperimentResult run_lambda_sweep(const Vec& lambdas, const std::vector<uint64_t>& seeds,
                                         const std::string& out_dir,
                                         DeepRunConfig cfg = sweep_run_defaults()) {
  if (lambdas.size() < 3)
    throw std::invalid_argument("lambda sweep: need at least 3 lambda values");
  const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0)
    throw std::invalid_argument("lambda sweep: grid must span at least two orders of magnitude");

  cfg.head_variant = CovarianceParam::Variant::Spherical;
  ExperimentResult result;
  result.id = "lambda-sweep";
  result.seeds = seeds;
  result.config = {{"spec", spec_to_json(cfg.spec)}, {"lambdas", lambdas},
                   {"epochs", cfg.epochs},           {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate}, {"hidden", cfg.hidden},
                   {"latent_dim", cfg.latent_dim}};
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const SplitData data = gen_synthetic(cfg.spec);
  result.per_seed.assign(seeds.size(), {});
  for (double lambda : lambdas) {
    const std::string ltag = detail::fmt_g(lambda);
    for (size_t si = 0; si < seeds.size(); ++si) {
      const uint64_t seed = seeds[si];
      Rng enc_rng = make_rng(seed, 2);
      const Encoder enc0 = make_mlp({cfg.spec.input_dim, cfg.hidden, cfg.latent_dim}, enc_rng);
      const LdaParams head0 =
          init_head(cfg.spec.num_classes, cfg.latent_dim, seed, cfg.head_variant);
      TrainConfig tc;
      tc.objective = ObjectiveKind::dnll(lambda);
      tc.epochs = cfg.epochs;
      tc.batch_size = cfg.batch_size;
      tc.eval_batch_size = cfg.eval_batch_size;
      tc.adam.learning_rate = cfg.learning_rate;
      tc.seed = seed;
      const DeepFit fit = fit_deep(data.train, enc0, head0, tc);

      auto& metrics = result.per_seed[si];
      metrics["sigma_l" + ltag] = fit.params.cov.spherical_sigma();
      metrics["test_acc_l" + ltag] =
          deep_accuracy(fit.encoder, fit.params, data.test, tc.eval_batch_size);
      const std::vector<Vec> test_z = encode_all(fit.encoder, data.test);
      metrics["ece_l" + ltag] = head_calibration(fit.params, test_z, data.test.labels).ece;
      // stationarity probe: lambda * exp(delta_y) should sit near 1 at the
      // optimum of the penalized objective
      Vec probe(data.train.size());
      for (size_t i = 0; i < data.train.size(); ++i) {
        const Vec delta = discriminants(fit.params, encode(fit.encoder, data.train.points[i]));
        probe[i] = lambda * std::exp(delta[data.train.labels[i]]);
      }
      metrics["stationarity_l" + ltag] = detail::median(std::move(probe));

      if (!out_dir.empty()) {
        const std::string tag = "l" + ltag + "_seed" + std::to_string(seed);
        write_trace_csv(fit.trace, detail::path_join(out_dir, "trace_" + tag + ".csv"));
        result.artifacts.push_back("trace_" + tag + ".csv");
      }
    }
  }
  finalize_aggregates(result);

  Vec mean_sigma, mean_acc, mean_ece;
  for (double lambda : lambdas) {
    const std::string ltag = detail::fmt_g(lambda);
    mean_sigma.push_back(result.mean.at("sigma_l" + ltag));
    mean_acc.push_back(result.mean.at("test_acc_l" + ltag));
    mean_ece.push_back(result.mean.at("ece_l" + ltag));
    result.summary["mean_sigma_l" + ltag] = mean_sigma.back();
  }
  result.summary["spearman_rho"] = spearman_rho(lambdas, mean_sigma);
  result.summary["accuracy_range"] =
      *std::max_element(mean_acc.begin(), mean_acc.end()) -
      *std::min_element(mean_acc.begin(), mean_acc.end());
  result.summary["ece_range"] = *std::max_element(mean_ece.begin(), mean_ece.end()) -
                                *std::min_element(mean_ece.begin(), mean_ece.end());
  if (!(result.summary["spearman_rho"] >= 0.9)) {
    result.ok = false;
    result.failures.push_back("lambda vs final sigma rank correlation below 0.9");
  }
  return result;
}

/// Calibration on overlapping classes: LDA head trained with the penalized
/// likelihood versus the same encoder with an affine softmax layer trained
/// with cross-entropy.
// With plenty of data both heads land on the Bayes posterior and the
// comparison is a coin flip. The comparison bites in the overfitting regime:
// a small train set and a wide encoder let the softmax logits inflate past
// the achievable accuracy, while the density penalty pins exp(delta) to the
// data scale. Hence fewer points, more width, and a long schedule here.
inline DeepRunConfig calibration_run_defaults() {
  DeepRunConfig cfg{SyntheticSpec::overlapping()};
  cfg.spec.n_train = 1000;
  cfg.hidden = 128;
  cfg.epochs = 1000;
  cfg.learning_rate = 3e-3;
  return cfg;
}

inline ExperimentResult run_calibration_comparison(const std::vector<uint64_t>& seeds,
                                                   const std::string& out_dir,
                                                   DeepRunConfig cfg = calibration_run_defaults(),
                                                   double lambda = 1.0) {
  ExperimentResult result;
  result.id = "calibration-comparison";
  result.seeds = seeds;
  result.config = {{"spec", spec_to_json(cfg.spec)}, {"lambda", lambda},
                   {"epochs", cfg.epochs},           {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate}, {"hidden", cfg.hidden},
                   {"latent_dim", cfg.latent_dim}};
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const SplitData data = gen_synthetic(cfg.spec);

  // oracle reference: true Bayes posteriors are calibrated by construction
  const LdaParams truth = ground_truth_params(cfg.spec);
  result.summary["ece_bayes"] =
      head_calibration(truth, data.test.points, data.test.labels).ece;

  for (uint64_t seed : seeds) {
    Rng enc_rng = make_rng(seed, 2);
    const Encoder enc0 = make_mlp({cfg.spec.input_dim, cfg.hidden, cfg.latent_dim}, enc_rng);
    const LdaParams head0 = init_head(cfg.spec.num_classes, cfg.latent_dim, seed,
                                      cfg.head_variant);
    TrainConfig tc;
    tc.objective = ObjectiveKind::dnll(lambda);
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.eval_batch_size = cfg.eval_batch_size;
    tc.adam.learning_rate = cfg.learning_rate;
    tc.seed = seed;
    const DeepFit lda_fit = fit_deep(data.train, enc0, head0, tc);
    const std::vector<Vec> test_z = encode_all(lda_fit.encoder, data.test);
    const CalibrationReport lda_rep = head_calibration(lda_fit.params, test_z, data.test.labels);

    // identical encoder init plus a fresh affine layer to C logits
    Encoder net;
    {
      Rng base_rng = make_rng(seed, 2);
      net = make_mlp({cfg.spec.input_dim, cfg.hidden, cfg.latent_dim}, base_rng);
      net.layers.back().activation = Activation::Identity;
      Rng top_rng = make_rng(seed, 4);
      Encoder top = make_mlp({cfg.latent_dim, cfg.spec.num_classes}, top_rng);
      net.layers.push_back(top.layers.front());
      net.check_consistent();
    }
    TrainConfig sc = tc;
    sc.objective = ObjectiveKind::cross_entropy();
    const SoftmaxFit soft_fit = fit_softmax_net(data.train, net, sc);
    std::vector<Vec> soft_posteriors(data.test.size());
    for (size_t i = 0; i < data.test.size(); ++i)
      soft_posteriors[i] = softmax_net_posterior(soft_fit.net, data.test.points[i]);
    Vec conf;
    std::vector<bool> correct;
    confidence_outcomes(soft_posteriors, data.test.labels, conf, correct);
    const CalibrationReport soft_rep = calibration_report(conf, correct, 10);

    std::map<std::string, double> metrics;
    metrics["ece_dnll"] = lda_rep.ece;
    metrics["ece_softmax"] = soft_rep.ece;
    metrics["acc_dnll"] = lda_rep.overall_accuracy;
    metrics["acc_softmax"] = soft_rep.overall_accuracy;
    metrics["conf_dnll"] = lda_rep.mean_confidence;
    metrics["conf_softmax"] = soft_rep.mean_confidence;
    result.per_seed.push_back(metrics);

    if (!out_dir.empty()) {
      const std::string tag = "seed" + std::to_string(seed);
      detail::write_json_file(calibration_report_to_json(lda_rep),
                              detail::path_join(out_dir, "calibration_dnll_" + tag + ".json"));
      detail::write_json_file(calibration_report_to_json(soft_rep),
                              detail::path_join(out_dir, "calibration_softmax_" + tag + ".json"));
      write_reliability_csv(lda_rep, detail::path_join(out_dir, "reliability_dnll_" + tag + ".csv"));
      write_reliability_csv(soft_rep,
                            detail::path_join(out_dir, "reliability_softmax_" + tag + ".csv"));
      result.artifacts.push_back("calibration_dnll_" + tag + ".json");
      result.artifacts.push_back("calibration_softmax_" + tag + ".json");
      result.artifacts.push_back("reliability_dnll_" + tag + ".csv");
      result.artifacts.push_back("reliability_softmax_" + tag + ".csv");
    }
  }
  finalize_aggregates(result);
  if (!(result.mean.at("ece_dnll") < result.mean.at("ece_softmax"))) {
    result.ok = false;
    result.failures.push_back("mean ECE of the LDA head is not below the softmax baseline");
  }
  return result;
}

/// Writes result.json and manifest.json under out_dir.
inline void write_experiment(const ExperimentResult& r, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  detail::write_json_file(result_to_json(r), detail::path_join(out_dir, "result.json"));
  std::vector<std::string> artifacts = r.artifacts;
  artifacts.push_back("result.json");
  detail::write_json_file(nlohmann::json{{"id", r.id},
                                         {"config", r.config},
                                         {"seeds", r.seeds},
                                         {"artifacts", artifacts}},
                          detail::path_join(out_dir, "manifest.json"));
}

}  // namespace deeplda
