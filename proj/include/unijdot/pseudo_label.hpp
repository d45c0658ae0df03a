#pragma once

#include <cstdint>
#include <vector>

#include "unijdot/thresholding.hpp"

namespace unijdot {

// Per-class ring buffers of source feature vectors. Guarantees at least one
// vector per class once initialized, so the class distance vector is always
// well-defined.
struct ClassMemory {
  int num_classes = 0;
  int dim = 0;
  int capacity = 0;  // per-class N_c
  std::vector<std::vector<float>> store;  // class -> count*dim, ring order
  std::vector<int> cursor;                // next overwrite position
  bool initialized = false;

  int count(int cls) const {
    return static_cast<int>(store[cls].size()) / dim;
  }
};

// Samples up to capacity vectors per class without replacement (seeded).
// Every class id in [0, num_classes) must appear in labels.
ClassMemory memory_init(const std::vector<float>& features, int n, int dim,
                        const std::vector<int>& labels, int num_classes,
                        int capacity, uint64_t seed);

// FIFO overwrite per class; counts never drop and never exceed capacity.
void memory_update(ClassMemory& mem, const std::vector<float>& features,
                   int n, const std::vector<int>& labels);

// d[k] = min squared Euclidean distance from g to the stored class-k vectors.
std::vector<float> distance_vector(const float* g, const ClassMemory& mem);

// p' = softmax(h ⊙ softmax(-d)): logits conditioned elementwise by
// distance-based probabilities, then normalized.
template <class Real>
std::vector<Real> joint_decision(const std::vector<Real>& logits,
                                 const std::vector<Real>& dist);

extern template std::vector<float> joint_decision<float>(
    const std::vector<float>&, const std::vector<float>&);
extern template std::vector<double> joint_decision<double>(
    const std::vector<double>&, const std::vector<double>&);

enum class PseudoLabel : uint8_t { Common = 0, Unknown = 1 };

struct PseudoLabelBatch {
  std::vector<float> p_prime;      // batch x K
  std::vector<float> confidences;  // batch (max p' per row)
  double tau = 0;
  bool degenerate_threshold = false;
  std::vector<PseudoLabel> labels;

  int count(PseudoLabel l) const {
    int c = 0;
    for (auto x : labels) c += (x == l);
    return c;
  }
};

struct PseudoLabelConfig {
  ThresholdMethod method = ThresholdMethod::Yen;
  int bin_count = 64;  // 2x batch size by default, set by the caller
  bool joint_decision = true;  // off: confidences from plain softmax(h)
};

// Scores the batch, auto-thresholds the confidence histogram and applies the
// strict rule: Unknown iff max p' < tau. A degenerate threshold labels the
// whole batch Common. When cfg.fixed_tau is supplied the histogram step is
// skipped.
PseudoLabelBatch pseudo_label_batch(const std::vector<float>& logits,
                                    const std::vector<float>& features,
                                    int batch, int num_classes, int feat_dim,
                                    const ClassMemory& mem,
                                    const PseudoLabelConfig& cfg,
                                    const double* fixed_tau = nullptr);

}  // namespace unijdot
