#include "unijdot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "unijdot/kernels.hpp"

namespace unijdot {

namespace {

void validate_inputs(const std::vector<double>& a, const std::vector<double>& b,
                     const std::vector<double>& cost, int n, int m,
                     const OTConfig& cfg, bool balanced) {
  if (n <= 0 || m <= 0 || static_cast<int>(a.size()) != n ||
      static_cast<int>(b.size()) != m ||
      static_cast<int>(cost.size()) != n * m)
    throw std::invalid_argument("sinkhorn: shape mismatch");
  if (cfg.epsilon <= 0) throw std::invalid_argument("sinkhorn: epsilon <= 0");
  if (cfg.tol <= 0) throw std::invalid_argument("sinkhorn: tol <= 0");
  double sa = 0, sb = 0;
  for (double x : a) {
    if (x <= 0) throw std::invalid_argument("sinkhorn: masses must be > 0");
    sa += x;
  }
  for (double x : b) {
    if (x <= 0) throw std::invalid_argument("sinkhorn: masses must be > 0");
    sb += x;
  }
  if (balanced && std::abs(sa - sb) > 1e-6)
    throw std::invalid_argument("sinkhorn: mass mismatch between a and b");
  if (!balanced && (cfg.tau1 <= 0 || cfg.tau2 <= 0))
    throw std::invalid_argument("sinkhorn_unbalanced: tau1, tau2 must be > 0");
  for (double c : cost)
    if (!std::isfinite(c))
      throw std::invalid_argument("sinkhorn: non-finite cost");
}

// gamma_ij = exp(log_u_i + logk_ij + log_v_j); fills plan fields that depend
// on the materialized coupling.
void materialize(TransportPlan& plan, const std::vector<double>& logk,
                 const std::vector<double>& log_u,
                 const std::vector<double>& log_v,
                 const std::vector<double>& cost, int n, int m) {
  plan.rows = n;
  plan.cols = m;
  plan.gamma.assign(static_cast<size_t>(n) * m, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      plan.gamma[static_cast<size_t>(i) * m + j] =
          std::exp(log_u[i] + logk[static_cast<size_t>(i) * m + j] + log_v[j]);

  plan.row_marginal.assign(n, 0.0);
  plan.col_marginal.assign(m, 0.0);
  double cost_value = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double g = plan.gamma[static_cast<size_t>(i) * m + j];
      plan.row_marginal[i] += g;
      plan.col_marginal[j] += g;
      cost_value += g * cost[static_cast<size_t>(i) * m + j];
    }
  }
  plan.cost_value = cost_value;
}

double l1_violation(const std::vector<double>& marg,
                    const std::vector<double>& target) {
  double v = 0;
  for (size_t i = 0; i < marg.size(); ++i) v += std::abs(marg[i] - target[i]);
  return v;
}

}  // namespace

double generalized_kl(const std::vector<double>& x,
                      const std::vector<double>& y) {
  double acc = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0) acc += x[i] * std::log(x[i] / y[i]) - x[i] + y[i];
    else acc += y[i];
  }
  return acc;
}

TransportPlan sinkhorn(const std::vector<double>& a,
                       const std::vector<double>& b,
                       const std::vector<double>& cost, int n, int m,
                       const OTConfig& cfg) {
  validate_inputs(a, b, cost, n, m, cfg, /*balanced=*/true);

  std::vector<double> logk(static_cast<size_t>(n) * m);
  for (size_t i = 0; i < logk.size(); ++i) logk[i] = -cost[i] / cfg.epsilon;
  std::vector<double> log_a(n), log_b(m);
  for (int i = 0; i < n; ++i) log_a[i] = std::log(a[i]);
  for (int j = 0; j < m; ++j) log_b[j] = std::log(b[j]);

  std::vector<double> log_u(n, 0.0), log_v(m, 0.0);
  std::vector<double> lse_r(n), lse_c(m);

  TransportPlan plan;
  for (int it = 0; it < cfg.max_iters; ++it) {
    kernels::lse_rows(logk.data(), n, m, log_v.data(), lse_r.data());
    for (int i = 0; i < n; ++i) log_u[i] = log_a[i] - lse_r[i];
    kernels::lse_cols(logk.data(), n, m, log_u.data(), lse_c.data());
    for (int j = 0; j < m; ++j) log_v[j] = log_b[j] - lse_c[j];

    // after a column update rows are the violated side
    kernels::lse_rows(logk.data(), n, m, log_v.data(), lse_r.data());
    double viol = 0;
    for (int i = 0; i < n; ++i)
      viol += std::abs(std::exp(log_u[i] + lse_r[i]) - a[i]);
    plan.iterations_used = it + 1;
    plan.marginal_violation = viol;
    if (viol <= cfg.tol) {
      plan.converged = true;
      break;
    }
  }

  materialize(plan, logk, log_u, log_v, cost, n, m);
  // both sides at exit, for the record
  plan.marginal_violation = std::max(l1_violation(plan.row_marginal, a),
                                     l1_violation(plan.col_marginal, b));
  plan.kl_row = generalized_kl(plan.row_marginal, a);
  plan.kl_col = generalized_kl(plan.col_marginal, b);
  return plan;
}

TransportPlan sinkhorn_unbalanced(const std::vector<double>& a,
                                  const std::vector<double>& b,
                                  const std::vector<double>& cost, int n,
                                  int m, const OTConfig& cfg) {
  validate_inputs(a, b, cost, n, m, cfg, /*balanced=*/false);

  const double fi1 = cfg.tau1 / (cfg.tau1 + cfg.epsilon);
  const double fi2 = cfg.tau2 / (cfg.tau2 + cfg.epsilon);

  std::vector<double> logk(static_cast<size_t>(n) * m);
  for (size_t i = 0; i < logk.size(); ++i) logk[i] = -cost[i] / cfg.epsilon;
  std::vector<double> log_a(n), log_b(m);
  for (int i = 0; i < n; ++i) log_a[i] = std::log(a[i]);
  for (int j = 0; j < m; ++j) log_b[j] = std::log(b[j]);

  std::vector<double> log_u(n, 0.0), log_v(m, 0.0);
  std::vector<double> lse_r(n), lse_c(m);

  TransportPlan plan;
  for (int it = 0; it < cfg.max_iters; ++it) {
    double change = 0;
    kernels::lse_rows(logk.data(), n, m, log_v.data(), lse_r.data());
    for (int i = 0; i < n; ++i) {
      const double nu = fi1 * (log_a[i] - lse_r[i]);
      change += std::abs(nu - log_u[i]);
      log_u[i] = nu;
    }
    kernels::lse_cols(logk.data(), n, m, log_u.data(), lse_c.data());
    for (int j = 0; j < m; ++j) {
      const double nv = fi2 * (log_b[j] - lse_c[j]);
      change += std::abs(nv - log_v[j]);
      log_v[j] = nv;
    }
    plan.iterations_used = it + 1;
    plan.dual_change = change;
    if (change < cfg.tol) {
      plan.converged = true;
      break;
    }
  }

  materialize(plan, logk, log_u, log_v, cost, n, m);
  plan.kl_row = generalized_kl(plan.row_marginal, a);
  plan.kl_col = generalized_kl(plan.col_marginal, b);
  plan.marginal_violation = std::max(l1_violation(plan.row_marginal, a),
                                     l1_violation(plan.col_marginal, b));
  return plan;
}

double unbalanced_objective(const TransportPlan& plan,
                            const std::vector<double>& a,
                            const std::vector<double>& b,
                            const std::vector<double>& cost,
                            const OTConfig& cfg) {
  double transport = 0, entropy = 0;
  for (size_t i = 0; i < plan.gamma.size(); ++i) {
    const double g = plan.gamma[i];
    transport += g * cost[i];
    if (g > 0) entropy += g * std::log(g) - g;
  }
  return transport + cfg.epsilon * entropy +
         cfg.tau1 * generalized_kl(plan.row_marginal, a) +
         cfg.tau2 * generalized_kl(plan.col_marginal, b);
}

// ---------------------------------------------------------------------------
// Transportation simplex with Bland's anti-cycling rule. Basis cells form a
// spanning tree of the bipartite row/column graph; entering cell is the first
// (row-major) with negative reduced cost, leaving cell the first minimizer on
// the losing side of the pivot cycle.
// ---------------------------------------------------------------------------

TransportPlan exact_ot_small(const std::vector<double>& a,
                             const std::vector<double>& b,
                             const std::vector<double>& cost, int n, int m) {
  if (n * m > 36)
    throw std::invalid_argument("exact_ot_small: instance too large");
  if (static_cast<int>(a.size()) != n || static_cast<int>(b.size()) != m ||
      static_cast<int>(cost.size()) != n * m)
    throw std::invalid_argument("exact_ot_small: shape mismatch");
  double sa = 0, sb = 0;
  for (double x : a) sa += x;
  for (double x : b) sb += x;
  if (std::abs(sa - sb) > 1e-6)
    throw std::invalid_argument("exact_ot_small: mass mismatch");

  // rescale demands so supplies and demands balance exactly
  std::vector<double> bb(b);
  for (double& x : bb) x *= sa / sb;

  std::vector<double> flow(static_cast<size_t>(n) * m, 0.0);
  std::vector<char> basic(static_cast<size_t>(n) * m, 0);

  // northwest-corner initial basis
  {
    std::vector<double> supply(a), demand(bb);
    int i = 0, j = 0;
    while (i < n && j < m) {
      const double q = std::min(supply[i], demand[j]);
      flow[static_cast<size_t>(i) * m + j] = q;
      basic[static_cast<size_t>(i) * m + j] = 1;
      supply[i] -= q;
      demand[j] -= q;
      if (i == n - 1 && j == m - 1) break;
      if (supply[i] <= demand[j] && i < n - 1)
        ++i;
      else if (j < m - 1)
        ++j;
      else
        ++i;
    }
  }

  std::vector<double> u(n), v(m);
  std::vector<char> userved(n), vserved(m);

  const int max_pivots = 2000;
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    // potentials from the basis tree (u_0 = 0)
    std::fill(userved.begin(), userved.end(), 0);
    std::fill(vserved.begin(), vserved.end(), 0);
    u[0] = 0;
    userved[0] = 1;
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          if (!basic[static_cast<size_t>(i) * m + j]) continue;
          if (userved[i] && !vserved[j]) {
            v[j] = cost[static_cast<size_t>(i) * m + j] - u[i];
            vserved[j] = 1;
            progressed = true;
          } else if (!userved[i] && vserved[j]) {
            u[i] = cost[static_cast<size_t>(i) * m + j] - v[j];
            userved[i] = 1;
            progressed = true;
          }
        }
    }

    // entering cell: first with reduced cost below a small negative slack
    int ei = -1, ej = -1;
    for (int i = 0; i < n && ei < 0; ++i)
      for (int j = 0; j < m; ++j) {
        if (basic[static_cast<size_t>(i) * m + j]) continue;
        if (cost[static_cast<size_t>(i) * m + j] - u[i] - v[j] < -1e-12) {
          ei = i;
          ej = j;
          break;
        }
      }
    if (ei < 0) break;  // optimal

    // pivot cycle: path from row ei to column ej through basic cells,
    // found by DFS on the bipartite basis graph
    // nodes: rows 0..n-1, cols n..n+m-1
    std::vector<int> parent_cell(n + m, -1), parent_node(n + m, -1);
    std::vector<char> visited(n + m, 0);
    std::vector<int> stack{ei};
    visited[ei] = 1;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      if (node < n) {
        for (int j = 0; j < m; ++j) {
          if (!basic[static_cast<size_t>(node) * m + j] || visited[n + j])
            continue;
          visited[n + j] = 1;
          parent_node[n + j] = node;
          parent_cell[n + j] = node * m + j;
          stack.push_back(n + j);
        }
      } else {
        const int j = node - n;
        for (int i = 0; i < n; ++i) {
          if (!basic[static_cast<size_t>(i) * m + j] || visited[i]) continue;
          visited[i] = 1;
          parent_node[i] = node;
          parent_cell[i] = i * m + j;
          stack.push_back(i);
        }
      }
    }

    // walk back from column ej to row ei; cells alternate -/+ starting with
    // the first basic cell on the path losing flow
    std::vector<int> cycle;  // cells in path order
    for (int node = n + ej; node != ei;) {
      cycle.push_back(parent_cell[node]);
      node = parent_node[node];
    }

    double theta = std::numeric_limits<double>::max();
    int leave = -1;
    for (size_t k = 0; k < cycle.size(); k += 2) {  // losing cells
      if (flow[cycle[k]] < theta - 1e-15) {
        theta = flow[cycle[k]];
        leave = cycle[k];
      }
    }
    if (leave < 0) break;  // spanning basis invariant violated

    flow[static_cast<size_t>(ei) * m + ej] += theta;
    basic[static_cast<size_t>(ei) * m + ej] = 1;
    for (size_t k = 0; k < cycle.size(); ++k) {
      if (k % 2 == 0)
        flow[cycle[k]] -= theta;
      else
        flow[cycle[k]] += theta;
    }
    basic[leave] = 0;
    flow[leave] = 0;  // clear rounding residue
  }

  TransportPlan plan;
  plan.rows = n;
  plan.cols = m;
  plan.gamma = std::move(flow);
  plan.row_marginal.assign(n, 0.0);
  plan.col_marginal.assign(m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double g = plan.gamma[static_cast<size_t>(i) * m + j];
      plan.row_marginal[i] += g;
      plan.col_marginal[j] += g;
      plan.cost_value += g * cost[static_cast<size_t>(i) * m + j];
    }
  plan.converged = true;
  return plan;
}

}  // namespace unijdot
