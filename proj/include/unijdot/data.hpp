#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unijdot/tensor.hpp"

namespace unijdot {

constexpr int kUnknownLabel = -1;  // evaluation-only marker for private targets

struct TimeSeriesDataset {
  Tensor samples;  // n x channels x t
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::string split;  // "train" or "test"

  int n() const { return static_cast<int>(samples.shape[0]); }
  int channels() const { return static_cast<int>(samples.shape[1]); }
  int t() const { return static_cast<int>(samples.shape[2]); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
};

// Directory layout: meta.json + samples.bin (little-endian f32, row-major
// sample x channel x time) + labels.bin (little-endian i32).
TimeSeriesDataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const TimeSeriesDataset& ds);

// Unlabeled view handed to the adaptation loop; carries no label accessor by
// construction.
struct UnlabeledView {
  const Tensor* samples = nullptr;
  int n = 0, channels = 0, t = 0;
};

struct Scenario {
  TimeSeriesDataset source_train;  // relabeled to [0, K)
  TimeSeriesDataset source_test;
  TimeSeriesDataset target_train;  // labels kept only for bookkeeping
  TimeSeriesDataset target_test;   // kUnknownLabel marks private classes
  std::vector<int> common_labels;          // original ids
  std::vector<int> source_private_labels;  // original ids
  std::vector<int> target_private_labels;  // original ids
  std::vector<int> label_remap;  // original id -> [0, K) or kUnknownLabel
  int num_source_classes = 0;    // K

  UnlabeledView target_train_view() const {
    return {&target_train.samples, target_train.n(), target_train.channels(),
            target_train.t()};
  }
};

// Drops the target-private class from the source and the source-private class
// from the target, remaps surviving source classes to [0, K) and marks
// retained target-private samples with kUnknownLabel in test labels.
Scenario build_unida_scenario(const TimeSeriesDataset& source_train,
                              const TimeSeriesDataset& source_test,
                              const TimeSeriesDataset& target_train,
                              const TimeSeriesDataset& target_test,
                              int source_private, int target_private);

struct SynthConfig {
  int num_classes = 6;
  int channels = 3;
  int t = 64;
  int per_class = 100;
  double train_fraction = 0.7;
  // domain shift applied to the target half
  double amp_lo = 0.8, amp_hi = 1.25;
  double phase_jitter = 0.3;
  double source_noise = 0.1;
  double target_noise = 0.15;
  uint64_t seed = 0;
};

struct SynthPair {
  TimeSeriesDataset source_train, source_test;
  TimeSeriesDataset target_train, target_test;
};

// Classes are sinusoid mixtures keyed by class-specific frequencies; the
// target domain rescales channel amplitudes, jitters phases and adds more
// noise. Deterministic per seed.
SynthPair synth_generate(const SynthConfig& cfg);

// Seeded shuffled index batches. Training drops the trailing partial batch
// (batch-level thresholding needs stable batch sizes); evaluation keeps it.
std::vector<std::vector<int>> batch_iter(int n, int batch_size, uint64_t seed,
                                         int epoch, bool training);

// Packs the given sample rows into a dense batch x channels x t buffer.
std::vector<float> gather_samples(const Tensor& samples,
                                  const std::vector<int>& idx);

}  // namespace unijdot
