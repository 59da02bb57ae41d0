// Command-line driver: data generation, classical/deep fitting, the lambda
// sweep, calibration comparison, mixture-overlap analysis, and the
// finite-difference gradient suite. Exit codes: 0 success, 2 assertion
// failure, 3 collapse-terminated run.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deeplda/deeplda.hpp"

namespace {

using namespace deeplda;

constexpr int kExitAssertion = 2;
constexpr int kExitCollapse = 3;

SyntheticSpec spec_from_flags(const std::string& spec_path, const std::string& preset) {
  if (!spec_path.empty()) return load_spec(spec_path);
  if (preset == "overlapping") return SyntheticSpec::overlapping();
  return SyntheticSpec::well_separated();
}

CovarianceParam::Variant head_from_flag(const std::string& head) {
  if (head == "spherical") return CovarianceParam::Variant::Spherical;
  if (head == "diagonal") return CovarianceParam::Variant::Diagonal;
  return CovarianceParam::Variant::FullCholesky;
}

ObjectiveKind objective_from_flag(const std::string& name, double lambda) {
  if (name == "nll") return ObjectiveKind::nll();
  if (name == "ce") return ObjectiveKind::cross_entropy();
  return ObjectiveKind::dnll(lambda);
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_manifest(const std::string& out_dir, const std::string& id,
                    const nlohmann::json& config, const std::vector<std::string>& artifacts) {
  write_json_file(nlohmann::json{{"id", id}, {"config", config}, {"artifacts", artifacts}},
                  join(out_dir, "manifest.json"));
}

int cmd_gen_data(const std::string& spec_path, const std::string& preset,
                 const std::string& out_dir) {
  const SyntheticSpec spec = spec_from_flags(spec_path, preset);
  std::filesystem::create_directories(out_dir);
  const SplitData data = gen_synthetic(spec);
  write_dataset_csv(data.train, join(out_dir, "train.csv"));
  write_dataset_csv(data.test, join(out_dir, "test.csv"));
  save_params(ground_truth_params(spec), join(out_dir, "ground_truth.json"));
  write_json_file(spec_to_json(spec), join(out_dir, "spec.json"));
  write_manifest(out_dir, "gen-data", spec_to_json(spec),
                 {"train.csv", "test.csv", "ground_truth.json", "spec.json", "manifest.json"});
  std::cerr << "wrote " << data.train.size() << " train / " << data.test.size()
            << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_fit_classical(const std::string& objective, const std::string& data_dir,
                      const std::string& head, uint64_t seed, int epochs, int batch,
                      double lr, const std::string& out_dir) {
  const Dataset train = read_dataset_csv(join(data_dir, "train.csv"));
  const Dataset test = read_dataset_csv(join(data_dir, "test.csv"));
  TrainConfig tc;
  tc.objective = objective_from_flag(objective, 0.0);
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.adam.learning_rate = lr;
  tc.seed = seed;
  const LdaParams init = init_head(train.num_classes, train.dim(), seed, head_from_flag(head));
  const ClassicalFit fit = fit_classical(train, init, tc);

  std::filesystem::create_directories(out_dir);
  save_params(fit.params, join(out_dir, "params.json"));
  write_trace_csv(fit.trace, join(out_dir, "trace.csv"));
  nlohmann::json metrics{
      {"train_acc", fit.trace.epochs.empty() ? 0.0 : fit.trace.epochs.back().train_accuracy},
      {"test_acc", head_accuracy(fit.params, test, tc.eval_batch_size)},
      {"det_sigma", fit.params.cov.det()},
      {"collapse_epoch", fit.trace.collapse_epoch}};
  write_json_file(metrics, join(out_dir, "metrics.json"));
  nlohmann::json config{{"objective", objective}, {"head", head},   {"seed", seed},
                        {"epochs", epochs},       {"batch", batch}, {"lr", lr},
                        {"data", data_dir}};
  write_manifest(out_dir, "fit-classical", config,
                 {"params.json", "trace.csv", "metrics.json", "manifest.json"});
  std::cerr << "final train acc " << metrics["train_acc"] << ", det sigma "
            << metrics["det_sigma"] << "\n";
  return fit.trace.collapsed() ? kExitCollapse : 0;
}

int cmd_fit_deep(const std::string& objective, double lambda, const std::string& data_dir,
                 const std::string& head, uint64_t seed, int epochs, int batch, double lr,
                 const std::string& out_dir) {
  const Dataset train = read_dataset_csv(join(data_dir, "train.csv"));
  const Dataset test = read_dataset_csv(join(data_dir, "test.csv"));
  TrainConfig tc;
  tc.objective = objective_from_flag(objective, lambda);
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.adam.learning_rate = lr;
  tc.seed = seed;
  Rng enc_rng = make_rng(seed, 2);
  const Encoder enc0 = make_mlp({train.dim(), 32, 2}, enc_rng);
  const LdaParams head0 = init_head(train.num_classes, 2, seed, head_from_flag(head));
  const DeepFit fit = fit_deep(train, enc0, head0, tc);

  std::filesystem::create_directories(out_dir);
  save_params(fit.params, join(out_dir, "params.json"));
  write_trace_csv(fit.trace, join(out_dir, "trace.csv"));
  const std::vector<Vec> test_z = encode_all(fit.encoder, test);
  svg_scatter(test_z, test.labels, fit.params.means, join(out_dir, "latent_test.svg"));
  nlohmann::json metrics{
      {"train_acc", deep_accuracy(fit.encoder, fit.params, train, tc.eval_batch_size)},
      {"test_acc", deep_accuracy(fit.encoder, fit.params, test, tc.eval_batch_size)},
      {"det_sigma", fit.params.cov.det()},
      {"collapse_epoch", fit.trace.collapse_epoch}};
  write_json_file(metrics, join(out_dir, "metrics.json"));
  nlohmann::json config{{"objective", objective}, {"lambda", lambda}, {"head", head},
                        {"seed", seed},           {"epochs", epochs}, {"batch", batch},
                        {"lr", lr},               {"data", data_dir}};
  write_manifest(out_dir, "fit-deep", config,
                 {"params.json", "trace.csv", "latent_test.svg", "metrics.json", "manifest.json"});
  std::cerr << "final test acc " << metrics["test_acc"] << ", det sigma " << metrics["det_sigma"]
            << (fit.trace.collapsed() ? " (collapsed)" : "") << "\n";
  return fit.trace.collapsed() ? kExitCollapse : 0;
}

int cmd_sweep_lambda(const std::string& grid, int num_seeds, int epochs,
                     const std::string& out_dir) {
  Vec lambdas;
  std::stringstream ss(grid);
  std::string cell;
  while (std::getline(ss, cell, ',')) lambdas.push_back(std::stod(cell));
  DeepRunConfig cfg = sweep_run_defaults();
  if (epochs > 0) cfg.epochs = epochs;
  ExperimentResult result = run_lambda_sweep(lambdas, default_seeds(num_seeds), out_dir, cfg);
  write_experiment(result, out_dir);
  std::cerr << "spearman rho " << result.summary.at("spearman_rho") << ", accuracy range "
            << result.summary.at("accuracy_range") << "\n";
  return result.ok ? 0 : kExitAssertion;
}

int cmd_calibrate(const std::string& spec_path, int num_seeds, int epochs,
                  const std::string& out_dir) {
  DeepRunConfig cfg = calibration_run_defaults();
  if (!spec_path.empty()) cfg.spec = load_spec(spec_path);
  if (epochs > 0) cfg.epochs = epochs;
  ExperimentResult result = run_calibration_comparison(default_seeds(num_seeds), out_dir, cfg);
  write_experiment(result, out_dir);
  std::cerr << "mean ECE: lda " << result.mean.at("ece_dnll") << ", softmax "
            << result.mean.at("ece_softmax") << "\n";
  return result.ok ? 0 : kExitAssertion;
}

int cmd_analyze_mixture(const std::string& params_path, const std::string& against_path,
                        size_t mc_samples, uint64_t seed) {
  const LdaParams model = load_params(params_path);
  const LdaParams data_side = against_path.empty() ? model : load_params(against_path);
  const OverlapReport report = overlap_bound_check(data_side, model, mc_samples, seed);
  std::cout << overlap_report_to_json(report).dump(2) << "\n";
  return report.bound_satisfied ? 0 : kExitAssertion;
}

int cmd_grad_check(int trials, uint64_t seed) {
  const GradCheckReport report = run_grad_check(trials, seed);
  for (const GradCheckSuite& s : report.suites) {
    std::printf("%-14s trials %-5d max rel err %.3e  tolerance %.0e  %s\n", s.name.c_str(),
                s.trials, s.max_rel_err, s.tolerance, s.pass() ? "PASS" : "FAIL");
  }
  return report.pass() ? 0 : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep LDA training, overlap analysis, and calibration experiments"};
  app.require_subcommand(1);

  std::string spec_path, preset = "default", out_dir, data_dir, objective = "nll";
  std::string against_path, params_path, head = "full", grid = "1e-4,1e-3,1e-2,1e-1,1";
  uint64_t seed = 1;
  int epochs = 100, batch = 256, trials = 100, num_seeds = 3;
  double lr = 1e-3, lambda = 0.01;
  size_t mc_samples = 200000;

  auto* gen = app.add_subcommand("gen-data", "sample a synthetic mixture dataset");
  gen->add_option("--spec", spec_path, "JSON spec file (overrides --preset)");
  gen->add_option("--preset", preset, "default|overlapping")
      ->check(CLI::IsMember({"default", "overlapping"}));
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* fitc = app.add_subcommand("fit-classical", "fit the head directly on the inputs");
  fitc->add_option("--objective", objective, "nll|ce")->check(CLI::IsMember({"nll", "ce"}));
  fitc->add_option("--data", data_dir, "directory with train.csv/test.csv")->required();
  fitc->add_option("--head", head, "full|diagonal|spherical")
      ->check(CLI::IsMember({"full", "diagonal", "spherical"}));
  fitc->add_option("--seed", seed, "training seed");
  auto* fitc_epochs = fitc->add_option("--epochs", epochs, "training epochs");
  auto* fitc_lr = fitc->add_option("--lr", lr, "Adam learning rate");
  fitc->add_option("--batch", batch, "minibatch size");
  fitc->add_option("--out", out_dir, "output directory")->required();

  auto* fitd = app.add_subcommand("fit-deep", "train encoder plus head jointly");
  fitd->add_option("--objective", objective, "nll|ce|dnll")
      ->check(CLI::IsMember({"nll", "ce", "dnll"}));
  fitd->add_option("--lambda", lambda, "penalty weight for dnll");
  fitd->add_option("--data", data_dir, "directory with train.csv/test.csv")->required();
  fitd->add_option("--head", head, "full|diagonal|spherical")
      ->check(CLI::IsMember({"full", "diagonal", "spherical"}));
  fitd->add_option("--seed", seed, "training seed");
  fitd->add_option("--epochs", epochs, "training epochs");
  fitd->add_option("--batch", batch, "minibatch size");
  fitd->add_option("--lr", lr, "Adam learning rate");
  fitd->add_option("--out", out_dir, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep-lambda", "train dnll spherical heads across a grid");
  sweep->add_option("--grid", grid, "comma-separated lambda values");
  sweep->add_option("--seeds", num_seeds, "number of seeds (1..N)");
  auto* sweep_epochs = sweep->add_option("--epochs", epochs, "training epochs per run");
  sweep->add_option("--out", out_dir, "output directory")->required();

  auto* cal = app.add_subcommand("calibrate", "LDA head vs softmax baseline calibration");
  cal->add_option("--spec", spec_path, "JSON spec file (default: overlapping preset)");
  cal->add_option("--seeds", num_seeds, "number of seeds (1..N)");
  auto* cal_epochs = cal->add_option("--epochs", epochs, "training epochs per run");
  cal->add_option("--out", out_dir, "output directory")->required();

  auto* analyze = app.add_subcommand("analyze-mixture", "overlap bound report as JSON");
  analyze->add_option("--params", params_path, "model params JSON")->required();
  analyze->add_option("--against", against_path, "data-side params JSON (default: self)");
  analyze->add_option("--mc-samples", mc_samples, "Monte Carlo sample count");
  analyze->add_option("--seed", seed, "Monte Carlo seed");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  gc->add_option("--trials", trials, "random configurations per suite");
  gc->add_option("--seed", seed, "suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, preset, out_dir);
    if (fitc->parsed()) {
      if (!*fitc_epochs) epochs = 300;
      if (!*fitc_lr) lr = 3e-3;
      return cmd_fit_classical(objective, data_dir, head, seed, epochs, batch, lr, out_dir);
    }
    if (fitd->parsed())
      return cmd_fit_deep(objective, lambda, data_dir, head, seed, epochs, batch, lr, out_dir);
    if (sweep->parsed()) return cmd_sweep_lambda(grid, num_seeds, *sweep_epochs ? epochs : 0, out_dir);
    if (cal->parsed()) return cmd_calibrate(spec_path, num_seeds, *cal_epochs ? epochs : 0, out_dir);
    if (analyze->parsed()) return cmd_analyze_mixture(params_path, against_path, mc_samples, seed);
    if (gc->parsed()) return cmd_grad_check(trials, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
