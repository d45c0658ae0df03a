#pragma once

#include <vector>

namespace unijdot {

struct OTConfig {
  double epsilon = 0.01;  // entropic regularization strength
  int max_iters = 1000;
  double tol = 1e-6;      // balanced: L1 marginal violation; unbalanced: L1 dual change
  double tau1 = 1.0;      // row-marginal KL penalty
  double tau2 = 1.0;      // column-marginal KL penalty
};

struct TransportPlan {
  int rows = 0, cols = 0;
  std::vector<double> gamma;   // rows x cols, non-negative
  double cost_value = 0;       // <C, gamma>, transport term only
  std::vector<double> row_marginal, col_marginal;
  int iterations_used = 0;
  bool converged = false;
  // convergence metadata
  double marginal_violation = 0;  // balanced criterion at exit
  double dual_change = 0;         // unbalanced criterion at exit
  double kl_row = 0, kl_col = 0;  // generalized KL of marginals vs (a, b)

  double at(int i, int j) const { return gamma[static_cast<size_t>(i) * cols + j]; }
  double total_mass() const {
    double s = 0;
    for (double g : gamma) s += g;
    return s;
  }
};

// Entropy-regularized balanced transport, log-domain scaling iterations.
// Requires strictly positive masses with equal sums (within 1e-6) and a
// finite cost matrix. Non-convergence within max_iters is reported through
// converged=false rather than an exception.
TransportPlan sinkhorn(const std::vector<double>& a,
                       const std::vector<double>& b,
                       const std::vector<double>& cost, int n, int m,
                       const OTConfig& cfg);

// Marginal-relaxed variant: each dual update is damped by
// tau_i / (tau_i + epsilon), which recovers the balanced solver as tau grows.
// Mass sums may differ. Stops on L1 change of the dual potentials.
TransportPlan sinkhorn_unbalanced(const std::vector<double>& a,
                                  const std::vector<double>& b,
                                  const std::vector<double>& cost, int n,
                                  int m, const OTConfig& cfg);

// Exact LP solution by the transportation simplex, for instances with
// n*m <= 36. Test oracle; not used on the training path.
TransportPlan exact_ot_small(const std::vector<double>& a,
                             const std::vector<double>& b,
                             const std::vector<double>& cost, int n, int m);

// Objective value minimized by sinkhorn_unbalanced at its fixed point:
// <C,g> + eps*sum(g log g - g) + tau1*KLg(g1,a) + tau2*KLg(g^T 1,b).
// Exposed for the solver tests.
double unbalanced_objective(const TransportPlan& plan,
                            const std::vector<double>& a,
                            const std::vector<double>& b,
                            const std::vector<double>& cost,
                            const OTConfig& cfg);

// Generalized KL divergence sum_i x_i log(x_i/y_i) - x_i + y_i.
double generalized_kl(const std::vector<double>& x,
                      const std::vector<double>& y);

}  // namespace unijdot
