#pragma once

#include <vector>

#include "unijdot/anchors.hpp"
#include "unijdot/model.hpp"
#include "unijdot/ot.hpp"
#include "unijdot/pseudo_label.hpp"

namespace unijdot {

struct AlignmentConfig {
  double mu = 1.0;
  // Label-space term of the common block: source logits by default, one-hot
  // source labels behind this flag.
  bool onehot_label_cost = false;
  // Unknown block compares the uniform anchor r against raw target logits by
  // default; this flag applies a softmax to the logits first.
  bool softmax_unknown_term = false;
};

// One mini-batch of alignment inputs. Rows of the cost blocks are source
// samples / feature anchors, columns are target samples split by pseudo-label.
template <class Real>
struct AlignmentBatch {
  int n_source = 0, n_target = 0;
  int feat_dim = 0, num_classes = 0, n_anchors = 0;
  const Real* g_source = nullptr;  // n_source x feat_dim
  const Real* h_source = nullptr;  // n_source x num_classes
  const Real* g_target = nullptr;  // n_target x feat_dim
  const Real* h_target = nullptr;  // n_target x num_classes
  const Real* anchors = nullptr;   // n_anchors x feat_dim
  const Real* r = nullptr;         // num_classes
  const PseudoLabel* labels = nullptr;  // n_target
  const int* y_source = nullptr;        // used when onehot_label_cost
  AlignmentConfig cfg;
};

struct XiPolicy {
  bool fixed = false;
  double value = 0;
  static XiPolicy auto_margin() { return {}; }
  static XiPolicy fixed_value(double v) { return {true, v}; }
};

struct BlockCost {
  int n_source = 0, n_anchors = 0, n_common = 0, n_unknown = 0;
  std::vector<double> common;    // n_source x n_common
  std::vector<double> unknown;   // n_anchors x n_unknown
  double xi = 0;
  std::vector<double> assembled; // (n_source+n_anchors) x (n_common+n_unknown)
  std::vector<int> column_permutation;  // assembled column -> target index

  int rows() const { return n_source + n_anchors; }
  int cols() const { return n_common + n_unknown; }
};

// C_ij = mu*||g_s[i]-g_t[j]||^2 + ||h_s[i]-h_t[j]||^2 over common targets.
template <class Real>
std::vector<Real> common_cost(const Real* g_s, int n_s, const Real* g_t,
                              int n_t, const Real* h_s, const Real* h_t,
                              int feat_dim, int num_classes, Real mu);

// C_kj = mu*||a_k-g_t[j]||^2 + ||r-h_t[j]||^2 over unknown targets.
template <class Real>
std::vector<Real> unknown_cost(const Real* anchors, int n_anchors,
                               const Real* g_t, int n_t, const Real* r,
                               const Real* h_t, int feat_dim, int num_classes,
                               Real mu);

// Assembles [[C_common, xi], [xi, C_unknown]]. The automatic policy picks
// xi = 2*max(block maxima) + 1e-6, strictly dominating every in-block cost.
// Either column block may be empty; both empty is an error.
BlockCost assemble_block_cost(std::vector<double> common, int n_source,
                              int n_common, std::vector<double> unknown,
                              int n_anchors, int n_unknown,
                              const XiPolicy& xi_policy);

// Builds both blocks from the batch and assembles, recording the column
// permutation back to the original target order.
template <class Real>
BlockCost build_block_cost(const AlignmentBatch<Real>& batch,
                           const XiPolicy& xi_policy);

// sum_ij gamma_ij * assembled_ij for a frozen plan.
double plan_cost(const BlockCost& block, const TransportPlan& plan);

template <class Real>
struct AlignmentGrads {
  std::vector<Real> g_source_feat;   // n_source x feat_dim
  std::vector<Real> g_source_logit;  // n_source x num_classes
  std::vector<Real> g_target_feat;   // n_target x feat_dim
  std::vector<Real> g_target_logit;  // n_target x num_classes
};

// Derivative of plan_cost with the plan held fixed, through the cost blocks
// back to features and logits. Padding cells and anchors contribute nothing.
template <class Real>
AlignmentGrads<Real> alignment_grads(const AlignmentBatch<Real>& batch,
                                     const BlockCost& block,
                                     const TransportPlan& plan);

template <class Real>
struct AlignmentResult {
  BlockCost block;
  TransportPlan plan;
  double loss = 0;
  AlignmentGrads<Real> grads;
};

// Full alignment objective: uniform masses 1/(n_source+n_anchors) and
// 1/n_target, one marginal-relaxed solve, transport loss and frozen-plan
// gradients. Solver non-convergence is propagated as a flag on the plan.
template <class Real>
AlignmentResult<Real> alignment_loss(const AlignmentBatch<Real>& batch,
                                     const OTConfig& cfg);

extern template std::vector<float> common_cost<float>(const float*, int,
                                                      const float*, int,
                                                      const float*,
                                                      const float*, int, int,
                                                      float);
extern template std::vector<double> common_cost<double>(const double*, int,
                                                        const double*, int,
                                                        const double*,
                                                        const double*, int,
                                                        int, double);
extern template std::vector<float> unknown_cost<float>(const float*, int,
                                                       const float*, int,
                                                       const float*,
                                                       const float*, int, int,
                                                       float);
extern template std::vector<double> unknown_cost<double>(const double*, int,
                                                         const double*, int,
                                                         const double*,
                                                         const double*, int,
                                                         int, double);
extern template BlockCost build_block_cost<float>(const AlignmentBatch<float>&,
                                                  const XiPolicy&);
extern template BlockCost build_block_cost<double>(
    const AlignmentBatch<double>&, const XiPolicy&);
extern template AlignmentGrads<float> alignment_grads<float>(
    const AlignmentBatch<float>&, const BlockCost&, const TransportPlan&);
extern template AlignmentGrads<double> alignment_grads<double>(
    const AlignmentBatch<double>&, const BlockCost&, const TransportPlan&);
extern template AlignmentResult<float> alignment_loss<float>(
    const AlignmentBatch<float>&, const OTConfig&);
extern template AlignmentResult<double> alignment_loss<double>(
    const AlignmentBatch<double>&, const OTConfig&);

struct StepReport {
  int step = 0;
  double tau = 0;
  bool degenerate_threshold = false;
  int n_common = 0, n_unknown = 0;
  double ce_loss = 0;
  double ot_loss = 0;
  double combined_loss = 0;
  bool ot_converged = true;
  double transported_mass = 0;
};

// One alternating optimization step: forward both batches, pseudo-label the
// target batch, refresh memory and anchors, solve the transport problem for
// a fixed network, then take one gradient step on
// lambda*CE + (1-lambda)*transport with the plan frozen.
StepReport training_step(Net& net, const float* x_source,
                         const std::vector<int>& y_source, int n_source,
                         const float* x_target, int n_target, ClassMemory& mem,
                         AnchorSet& anchors, const TrainConfig& tc,
                         const OTConfig& oc, const AlignmentConfig& ac,
                         const PseudoLabelConfig& plc,
                         const double* fixed_tau = nullptr);

}  // namespace unijdot
