#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "deeplda/experiments.hpp"

using namespace deeplda;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t count_occurrences(const std::string& hay, const std::string& needle) {
  size_t count = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s = SyntheticSpec::well_separated();
  s.n_train = 1500;
  s.n_test = 400;
  return s;
}

}  // namespace

TEST_CASE("synthetic spec presets and json round trip") {
  SyntheticSpec s = SyntheticSpec::well_separated();
  REQUIRE(s.num_classes == 3);
  REQUIRE(s.input_dim == 2);
  REQUIRE(s.n_train == 20000);
  REQUIRE(s.n_test == 4000);
  REQUIRE(s.seed == 7);
  REQUIRE(s.means[1] == Vec{6.0, 0.0});
  REQUIRE(s.sigma(0, 1) == 0.3);

  SyntheticSpec o = SyntheticSpec::overlapping();
  REQUIRE(std::abs(o.means[1][0] - 2.1) < 1e-14);
  REQUIRE(o.means[1][1] == 0.0);
  REQUIRE(o.sigma(0, 0) == 1.0);

  nlohmann::json j = spec_to_json(s);
  SyntheticSpec back = spec_from_json(j);
  REQUIRE(back.num_classes == s.num_classes);
  REQUIRE(back.priors == s.priors);
  REQUIRE(back.means == s.means);
  REQUIRE(back.sigma == s.sigma);
  REQUIRE(back.n_train == s.n_train);
  REQUIRE(back.seed == s.seed);
}

TEST_CASE("ground truth params mirror the spec") {
  SyntheticSpec s = SyntheticSpec::well_separated();
  LdaParams gt = ground_truth_params(s);
  Vec pri = gt.priors();
  for (double v : pri) REQUIRE(std::abs(v - 1.0 / 3.0) < 1e-12);
  REQUIRE(gt.means == s.means);
  Matrix sig = gt.cov.sigma_matrix();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      REQUIRE(std::abs(sig(i, j) - s.sigma(i, j)) < 1e-12);
}

TEST_CASE("generated data is deterministic with disjoint splits") {
  SyntheticSpec s = tiny_spec();
  SplitData a = gen_synthetic(s);
  SplitData b = gen_synthetic(s);
  REQUIRE(a.train.labels == b.train.labels);
  REQUIRE(a.train.points == b.train.points);
  REQUIRE(a.test.labels == b.test.labels);
  REQUIRE(a.test.points == b.test.points);
  REQUIRE(a.train.size() == 1500);
  REQUIRE(a.test.size() == 400);

  // train and test streams differ
  bool same_prefix = true;
  for (size_t i = 0; i < 50; ++i)
    if (a.train.points[i] != a.test.points[i]) same_prefix = false;
  REQUIRE_FALSE(same_prefix);

  SyntheticSpec s2 = s;
  s2.seed = 8;
  SplitData c = gen_synthetic(s2);
  REQUIRE(c.train.points != a.train.points);
}

TEST_CASE("label frequencies track the priors") {
  SyntheticSpec s = SyntheticSpec::well_separated();
  s.n_train = 30000;
  SplitData data = gen_synthetic(s);
  Vec counts(3, 0.0);
  for (int y : data.train.labels) counts[y] += 1.0;
  for (int c = 0; c < 3; ++c)
    REQUIRE(std::abs(counts[c] / 30000.0 - 1.0 / 3.0) < 0.01);
}

TEST_CASE("bayes accuracy of the two presets") {
  SyntheticSpec s = SyntheticSpec::well_separated();
  SplitData data = gen_synthetic(s);
  LdaParams gt = ground_truth_params(s);
  double acc = head_accuracy(gt, data.test, 1024);
  REQUIRE(acc >= 0.98);

  SyntheticSpec o = SyntheticSpec::overlapping();
  SplitData odata = gen_synthetic(o);
  LdaParams ogt = ground_truth_params(o);
  double oacc = head_accuracy(ogt, odata.test, 1024);
  REQUIRE(oacc >= 0.79);
  REQUIRE(oacc <= 0.92);
}

TEST_CASE("closed form fit recovers the generator on the default spec") {
  SyntheticSpec s = SyntheticSpec::well_separated();
  SplitData data = gen_synthetic(s);
  LdaParams truth = ground_truth_params(s);
  LdaParams fit = closed_form_lda_fit(data.train);
  RecoveryError err = recovery_error(fit, truth);
  REQUIRE(err.max_mean_err < 0.05);
  REQUIRE(err.cov_frobenius_err < 0.05);

  // oracle accuracy on held-out data matches the generator's
  double acc = head_accuracy(fit, data.test, 1024);
  REQUIRE(acc >= 0.98);

  Dataset empty;
  REQUIRE_THROWS_AS(closed_form_lda_fit(empty), EmptyDataset);
}

TEST_CASE("greedy matching undoes a permutation of identical means") {
  std::vector<Vec> ref = {{0.0, 0.0}, {5.0, 0.0}, {0.0, 5.0}};
  std::vector<Vec> est = {ref[2], ref[0], ref[1]};  // est[e] = ref[(e+2)%3]
  std::vector<int> match = greedy_match(est, ref);
  REQUIRE(match[0] == 1);
  REQUIRE(match[1] == 2);
  REQUIRE(match[2] == 0);

  // slightly perturbed estimates still match their nearest reference
  std::vector<Vec> est2 = {{4.9, 0.1}, {0.1, 5.1}, {-0.1, 0.0}};
  std::vector<int> match2 = greedy_match(est2, ref);
  REQUIRE(match2[0] == 2);
  REQUIRE(match2[1] == 0);
  REQUIRE(match2[2] == 1);
}

TEST_CASE("recovery error vanishes when the fit is the reference") {
  LdaParams p;
  p.prior_logits = {0.0, 0.0};
  p.means = {{1.0, 2.0}, {-3.0, 0.5}};
  p.cov = CovarianceParam::full_identity(2);
  RecoveryError err = recovery_error(p, p);
  REQUIRE(err.max_mean_err == 0.0);
  REQUIRE(err.cov_frobenius_err == 0.0);
  for (double v : err.per_class_mean_err) REQUIRE(v == 0.0);
}

TEST_CASE("spearman correlation on monotone, reversed, and tied data") {
  Vec x = {1.0, 2.0, 3.0, 4.0, 5.0};
  Vec inc = {2.0, 4.0, 4.5, 8.0, 100.0};
  REQUIRE(std::abs(spearman_rho(x, inc) - 1.0) < 1e-12);
  Vec dec = {5.0, 4.0, 3.0, 2.0, 1.0};
  REQUIRE(std::abs(spearman_rho(x, dec) + 1.0) < 1e-12);

  // ties get average ranks; a tie in the middle keeps rho below 1
  Vec tied = {1.0, 2.0, 2.0, 3.0, 4.0};
  double rho = spearman_rho(x, tied);
  REQUIRE(rho > 0.9);
  REQUIRE(rho < 1.0);

  REQUIRE_THROWS_AS(spearman_rho(Vec{1.0}, Vec{1.0, 2.0}), LengthMismatch);
}

TEST_CASE("scatter plots cap points and stay byte deterministic") {
  SyntheticSpec s = tiny_spec();
  SplitData data = gen_synthetic(s);
  auto tmp = std::filesystem::temp_directory_path();
  std::string p1 = (tmp / "deeplda_scatter_a.svg").string();
  std::string p2 = (tmp / "deeplda_scatter_b.svg").string();

  std::vector<Vec> means = ground_truth_params(s).means;
  size_t plotted = svg_scatter(data.train.points, data.train.labels, means, p1, 500);
  REQUIRE(plotted == 500);
  std::string svg = slurp(p1);
  REQUIRE(count_occurrences(svg, "<circle") == 500);
  // two crossing lines per mean
  REQUIRE(count_occurrences(svg, "<line") == 6);
  REQUIRE(svg.find("timestamp") == std::string::npos);
  REQUIRE(svg.find("date") == std::string::npos);

  svg_scatter(data.train.points, data.train.labels, means, p2, 500);
  REQUIRE(slurp(p2) == svg);

  // below the cap everything is drawn
  size_t all = svg_scatter(data.test.points, data.test.labels, means, p2, 5000);
  REQUIRE(all == data.test.size());
  REQUIRE(count_occurrences(slurp(p2), "<circle") == data.test.size());

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("aggregates recompute from the per seed table") {
  ExperimentResult r;
  r.per_seed = {{{"a", 1.0}, {"b", 10.0}},
                {{"a", 2.0}, {"b", 30.0}},
                {{"a", 3.0}, {"b", 20.0}}};
  finalize_aggregates(r);
  REQUIRE(std::abs(r.mean.at("a") - 2.0) < 1e-15);
  REQUIRE(std::abs(r.mean.at("b") - 20.0) < 1e-15);
  REQUIRE(std::abs(r.twice_std.at("a") - 2.0) < 1e-12);          // 2 * std([1,2,3]) = 2
  REQUIRE(std::abs(r.twice_std.at("b") - 20.0) < 1e-12);         // 2 * std([10,30,20]) = 20

  ExperimentResult single;
  single.per_seed = {{{"a", 5.0}}};
  finalize_aggregates(single);
  REQUIRE(single.mean.at("a") == 5.0);
  REQUIRE(single.twice_std.at("a") == 0.0);
}

TEST_CASE("experiment result json carries the full structure") {
  ExperimentResult r;
  r.id = "demo";
  r.config = {{"k", 1}};
  r.seeds = {1, 2};
  r.per_seed = {{{"m", 0.5}}, {{"m", 0.7}}};
  r.artifacts = {"a.csv"};
  finalize_aggregates(r);
  nlohmann::json j = result_to_json(r);
  REQUIRE(j["id"] == "demo");
  REQUIRE(j["seeds"].size() == 2);
  REQUIRE(j["per_seed"].size() == 2);
  REQUIRE(j["aggregate"]["mean"]["m"].get<double>() == r.mean.at("m"));
  REQUIRE(j["ok"] == true);
  REQUIRE(j["artifacts"][0] == "a.csv");
}

TEST_CASE("classical consistency runner produces the expected table shape") {
  ClassicalRunConfig cfg;
  cfg.spec = tiny_spec();
  cfg.epochs = 30;
  ExperimentResult r = run_classical_consistency({1}, "", cfg);
  REQUIRE(r.id == "classical-consistency");
  REQUIRE(r.seeds == std::vector<uint64_t>{1});
  REQUIRE(r.per_seed.size() == 1);
  for (const char* key : {"nll_mean_err", "ce_mean_err", "nll_cov_err", "ce_cov_err",
                          "nll_train_acc", "ce_train_acc", "nll_test_acc", "ce_test_acc",
                          "nll_det_sigma", "ce_det_sigma", "nll_oracle_mean_agree",
                          "nll_oracle_cov_agree"})
    REQUIRE(r.per_seed[0].count(key) == 1);
  REQUIRE(r.mean.size() == r.per_seed[0].size());
  // no artifacts requested
  REQUIRE(r.artifacts.empty());

  // deterministic rerun
  ExperimentResult r2 = run_classical_consistency({1}, "", cfg);
  REQUIRE(result_to_json(r2) == result_to_json(r));
}

TEST_CASE("deep comparison runner records collapse and cloud metrics") {
  DeepRunConfig cfg;
  cfg.spec = tiny_spec();
  cfg.epochs = 8;
  ExperimentResult r = run_deep_comparison(ObjectiveKind::dnll(0.01), {1}, "", cfg);
  REQUIRE(r.id == "deep-dnll");
  REQUIRE(r.per_seed.size() == 1);
  for (const char* key : {"train_acc", "test_acc", "det_sigma", "collapsed",
                          "collapse_epoch", "means_outside_cloud", "ece"})
    REQUIRE(r.per_seed[0].count(key) == 1);
  REQUIRE(r.per_seed[0].at("collapsed") == 0.0);
  REQUIRE(r.per_seed[0].at("collapse_epoch") == -1.0);

  ExperimentResult r2 = run_deep_comparison(ObjectiveKind::dnll(0.01), {1}, "", cfg);
  REQUIRE(result_to_json(r2) == result_to_json(r));
}

TEST_CASE("lambda sweep validates its grid and reports the summary") {
  DeepRunConfig cfg;
  cfg.spec = tiny_spec();
  cfg.epochs = 6;
  REQUIRE_THROWS_AS(run_lambda_sweep(Vec{0.1, 1.0}, {1}, "", cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(run_lambda_sweep(Vec{0.1, 0.2, 0.5}, {1}, "", cfg), std::invalid_argument);

  ExperimentResult r = run_lambda_sweep(Vec{1e-3, 1e-2, 1e-1}, {1}, "", cfg);
  REQUIRE(r.id == "lambda-sweep");
  REQUIRE(r.summary.count("spearman_rho") == 1);
  REQUIRE(r.summary.count("accuracy_range") == 1);
  REQUIRE(r.summary.count("ece_range") == 1);
  for (const char* tag : {"0.001", "0.01", "0.1"}) {
    REQUIRE(r.per_seed[0].count(std::string("sigma_l") + tag) == 1);
    REQUIRE(r.per_seed[0].count(std::string("test_acc_l") + tag) == 1);
    REQUIRE(r.per_seed[0].count(std::string("stationarity_l") + tag) == 1);
    REQUIRE(r.summary.count(std::string("mean_sigma_l") + tag) == 1);
  }
}

TEST_CASE("experiment artifacts land in the output directory") {
  auto out = std::filesystem::temp_directory_path() / "deeplda_exp_smoke";
  std::filesystem::remove_all(out);
  ClassicalRunConfig cfg;
  cfg.spec = tiny_spec();
  cfg.epochs = 10;
  ExperimentResult r = run_classical_consistency({1}, out.string(), cfg);
  write_experiment(r, out.string());
  REQUIRE(std::filesystem::exists(out / "result.json"));
  REQUIRE(std::filesystem::exists(out / "manifest.json"));
  for (const std::string& rel : r.artifacts)
    REQUIRE(std::filesystem::exists(out / rel));

  // the manifest lists every artifact plus the result file
  std::ifstream in((out / "manifest.json").string());
  nlohmann::json manifest;
  in >> manifest;
  REQUIRE(manifest["artifacts"].size() == r.artifacts.size() + 1);
  std::filesystem::remove_all(out);
}

TEST_CASE("median and rank helpers") {
  REQUIRE(detail::median(Vec{3.0, 1.0, 2.0}) == 2.0);
  REQUIRE(detail::median(Vec{4.0, 1.0, 2.0, 3.0}) == 2.5);
  Vec ranks = detail::ranks_of(Vec{10.0, 30.0, 20.0, 30.0});
  REQUIRE(ranks == Vec{1.0, 3.5, 2.0, 3.5});
}
