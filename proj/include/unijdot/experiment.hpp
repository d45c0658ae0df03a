#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unijdot/alignment.hpp"
#include "unijdot/data.hpp"
#include "unijdot/evaluation.hpp"
#include "unijdot/model.hpp"
#include "unijdot/ot.hpp"

namespace unijdot {

struct ScenarioConfig {
  bool synthetic = true;
  SynthConfig synth;
  std::string source_dir, target_dir;  // domain dirs holding train/ and test/
  int source_private = 5;
  int target_private = 0;
};

struct AblationToggles {
  bool auto_threshold = true;
  double fixed_tau = 0.5;  // used for pseudo-labeling when auto_threshold off
  bool joint_decision = true;
  bool fourier = true;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  ModelConfig model;  // input dims and class count are filled from the data
  TrainConfig train;
  OTConfig ot;
  AlignmentConfig align;
  ThresholdMethod threshold_method = ThresholdMethod::Yen;
  int threshold_bins = 0;  // 0 means 2x target batch size
  int num_anchors = 3;
  int memory_per_class = 128;
  float anchor_momentum = 0.1f;
  AblationToggles ablation;
  std::vector<uint64_t> seeds{0};
  std::string out_dir = "runs";
  InferenceMode eval_mode = InferenceMode::ValidationBatch;
  int validation_batch = 256;

  int effective_bins() const {
    return threshold_bins > 0 ? threshold_bins : 2 * train.target_batch;
  }
};

// Strict JSON schema: unknown keys and wrong types are ConfigErrors naming
// the offending path. Absent sections keep their defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string dump_experiment_config(const ExperimentConfig& cfg);

// 16-hex-digit FNV-1a digest of the canonical config dump and seed; run
// directories are content-addressed by it.
std::string config_hash(const ExperimentConfig& cfg, uint64_t seed);

struct ScenarioData {
  Scenario scenario;
  int in_channels = 0, seq_len = 0, num_classes = 0;
};

ScenarioData prepare_scenario(const ScenarioConfig& cfg);

// Full trained state as shipped in a checkpoint.
struct ModelState {
  Net net;
  ClassMemory memory;
  AnchorSet anchors;
  double last_tau = 0.5;
};

void save_model_state(const std::string& path, const ModelState& state);
ModelState load_model_state(const std::string& path);

struct RunResult {
  std::string run_dir;
  double last_tau = 0.5;
  EvalReport report;
  double first_loss = 0;  // combined loss at the first adaptation step
  double final_loss = 0;
  int steps = 0;
};

// Pretraining, adaptation, checkpoint and report emission for one seed.
// When out_dir is empty nothing is written and only the result is returned.
RunResult run_experiment(const ExperimentConfig& cfg, uint64_t seed,
                         const std::string& out_dir);

// Convenience: trains (or reuses state) and evaluates at a fixed inference
// threshold.
EvalReport evaluate_at_tau(const ExperimentConfig& cfg, const ModelState& st,
                           const ScenarioData& data, double tau);

struct SweepPoint {
  double tau = 0;
  double h_score = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double auto_h_score = 0;  // reference: auto-thresholded evaluation
  double auto_tau = 0;
  double best_tau = 0;      // argmax over the grid
  double best_h = 0;
};

// Trains once with the full method, then scores every fixed threshold in the
// grid at inference time; the auto-threshold score is the reference line.
SweepResult sweep_threshold(const ExperimentConfig& cfg,
                            const std::vector<double>& grid, uint64_t seed,
                            const std::string& out_dir);

void write_sweep_csv(const std::string& path, const SweepResult& sweep);

struct AblationRow {
  AblationToggles toggles;
  double mean_h = 0;
  std::vector<double> per_seed_h;
  bool full_method = false;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // 8 rows, all-on first
  double oracle_fixed_tau = 0;    // from the threshold sweep
};

// The 2^3 toggle grid. Rows with auto-thresholding disabled train and infer
// with the best fixed threshold found by the sweep.
AblationResult run_ablation(const ExperimentConfig& cfg,
                            const std::string& out_dir);

void write_ablation_csv(const std::string& path, const AblationResult& res);
void write_ablation_markdown(const std::string& path,
                             const AblationResult& res);

}  // namespace unijdot
