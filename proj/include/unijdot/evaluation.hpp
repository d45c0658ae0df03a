#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unijdot/anchors.hpp"
#include "unijdot/data.hpp"
#include "unijdot/model.hpp"
#include "unijdot/pseudo_label.hpp"

namespace unijdot {

enum class InferenceMode { LastTrainThreshold, ValidationBatch };

InferenceMode inference_mode_from_string(const std::string& s);
std::string to_string(InferenceMode m);

struct EvalReport {
  std::optional<double> a_common;   // accuracy on true-common samples
  std::optional<double> a_unknown;  // detection accuracy on true-private ones
  double h_score = 0;
  bool undefined_group = false;  // a class group was empty
  double tau_used = 0;
  InferenceMode mode = InferenceMode::ValidationBatch;
  std::vector<double> per_class_accuracy;  // indexed by source class id
  // confusion[true][pred], index K = unknown
  std::vector<std::vector<int64_t>> confusion;
  int num_classes = 0;
};

// Harmonic mean of the two accuracies; zero when either is zero.
double h_score(double a_common, double a_unknown);

// Single-sample prediction: joint decision against the frozen memory, then
// the strict threshold rule. Returns a class id or kUnknownLabel.
int infer(const Net& net, const ClassMemory& mem, const float* sample,
          double tau, bool joint = true);

// LastTrainThreshold passes the recorded value through; ValidationBatch runs
// the batch-level thresholding machinery on an unlabeled batch.
double inference_threshold(const Net& net, const ClassMemory& mem,
                           InferenceMode mode,
                           std::optional<double> last_train_tau,
                           const float* validation_batch, int validation_n,
                           const PseudoLabelConfig& plc);

// Scores a labeled target test set (kUnknownLabel marks private samples).
// Predicting unknown on a common sample counts as an error.
EvalReport evaluate(const Net& net, const ClassMemory& mem,
                    const TimeSeriesDataset& test, double tau, bool joint = true);

void write_report_json(const std::string& path, const EvalReport& rep);
void write_report_csv(const std::string& path, const EvalReport& rep);
EvalReport parse_report_csv(const std::string& path);

}  // namespace unijdot
