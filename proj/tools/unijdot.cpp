#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unijdot/errors.hpp"
#include "unijdot/experiment.hpp"

namespace fs = std::filesystem;
using namespace unijdot;

namespace {

ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return load_experiment_config(path);
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.empty()) continue;
    out.push_back(std::stod(cell));
  }
  return out;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed,
              const std::string& out_override) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  std::vector<uint64_t> seeds = seed ? std::vector<uint64_t>{*seed} : cfg.seeds;
  for (uint64_t s : seeds) {
    const auto res = run_experiment(cfg, s, cfg.out_dir);
    std::cout << "seed " << s << ": run_dir=" << res.run_dir
              << " h_score=" << res.report.h_score << " tau=" << res.last_tau
              << " steps=" << res.steps << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(const std::string& run_dir, const std::string& mode_str) {
  const InferenceMode mode = inference_mode_from_string(mode_str);
  ExperimentConfig cfg =
      load_experiment_config((fs::path(run_dir) / "config.json").string());
  cfg.eval_mode = mode;
  const auto state =
      load_model_state((fs::path(run_dir) / "checkpoint.bin").string());
  const ScenarioData data = prepare_scenario(cfg.scenario);

  double tau;
  if (!cfg.ablation.auto_threshold) {
    tau = cfg.ablation.fixed_tau;
  } else if (mode == InferenceMode::LastTrainThreshold) {
    tau = state.last_tau;
  } else {
    const auto& target = data.scenario.target_train;
    const int vb = std::min(cfg.validation_batch, target.n());
    const auto batches = batch_iter(target.n(), vb, 0x70, 0, false);
    const auto x = gather_samples(target.samples, batches.front());
    PseudoLabelConfig plc;
    plc.method = cfg.threshold_method;
    plc.bin_count = cfg.effective_bins();
    plc.joint_decision = cfg.ablation.joint_decision;
    tau = inference_threshold(state.net, state.memory, mode, state.last_tau,
                              x.data(),
                              static_cast<int>(batches.front().size()), plc);
  }

  EvalReport rep = evaluate_at_tau(cfg, state, data, tau);
  rep.mode = mode;
  const std::string stem = "report_" + mode_str;
  write_report_json((fs::path(run_dir) / (stem + ".json")).string(), rep);
  write_report_csv((fs::path(run_dir) / (stem + ".csv")).string(), rep);
  std::cout << "mode=" << mode_str << " tau=" << tau
            << " h_score=" << rep.h_score << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  if (!cfg.scenario.synthetic)
    throw ConfigError("synth: config does not describe a synthetic scenario");
  const auto pair = synth_generate(cfg.scenario.synth);
  const fs::path root(out_dir.empty() ? "synth_data" : out_dir);
  save_dataset((root / "source" / "train").string(), pair.source_train);
  save_dataset((root / "source" / "test").string(), pair.source_test);
  save_dataset((root / "target" / "train").string(), pair.target_train);
  save_dataset((root / "target" / "test").string(), pair.target_test);
  std::cout << "wrote " << root.string() << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_csv,
              std::optional<uint64_t> seed, const std::string& out_override) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  std::vector<double> grid;
  if (!grid_csv.empty()) {
    grid = parse_grid(grid_csv);
  } else {
    for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.05);
  }
  if (grid.empty()) throw ConfigError("sweep: empty threshold grid");
  const std::string out =
      out_override.empty() ? cfg.out_dir + "/sweep" : out_override;
  const auto sweep =
      sweep_threshold(cfg, grid, seed ? *seed : cfg.seeds.front(), out);
  std::cout << "auto tau=" << sweep.auto_tau << " h=" << sweep.auto_h_score
            << "; best fixed tau=" << sweep.best_tau << " h=" << sweep.best_h
            << "\nwrote " << out << "/sweep.csv\n";
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& out_override) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  const std::string out =
      out_override.empty() ? cfg.out_dir + "/ablate" : out_override;
  const auto res = run_ablation(cfg, out);
  for (const auto& row : res.rows) {
    auto mark = [](bool b) { return b ? "+" : "-"; };
    std::cout << "auto" << mark(row.toggles.auto_threshold) << " joint"
              << mark(row.toggles.joint_decision) << " fourier"
              << mark(row.toggles.fourier) << "  H=" << row.mean_h
              << (row.full_method ? "  (full method)" : "") << "\n";
  }
  std::cout << "wrote " << out << "/ablation.{csv,md}\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UniJDOT experiments: universal domain adaptation for time "
               "series with unbalanced optimal transport"};
  app.require_subcommand(1);

  std::string config_path, out_dir, mode = "valbatch", tau_grid, run_dir;
  std::optional<uint64_t> seed;

  auto* train = app.add_subcommand("train", "train on a scenario");
  train->add_option("--config", config_path, "experiment config (JSON)");
  train->add_option("--seed", seed, "override config seeds with one seed");
  train->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("evaluate", "evaluate a finished run");
  eval->add_option("run_dir", run_dir, "run directory")->required();
  eval->add_option("--mode", mode, "last|valbatch");

  auto* synth = app.add_subcommand("synth", "generate synthetic datasets");
  synth->add_option("--config", config_path, "experiment config (JSON)");
  synth->add_option("--out", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep-threshold",
                                   "fixed-threshold sensitivity sweep");
  sweep->add_option("--config", config_path, "experiment config (JSON)");
  sweep->add_option("--tau-grid", tau_grid, "comma-separated thresholds");
  sweep->add_option("--seed", seed, "seed");
  sweep->add_option("--out", out_dir, "output directory");

  auto* ablate = app.add_subcommand("ablate", "2^3 component ablation table");
  ablate->add_option("--config", config_path, "experiment config (JSON)");
  ablate->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, seed, out_dir);
    if (eval->parsed()) return cmd_evaluate(run_dir, mode);
    if (synth->parsed()) return cmd_synth(config_path, out_dir);
    if (sweep->parsed()) return cmd_sweep(config_path, tau_grid, seed, out_dir);
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
