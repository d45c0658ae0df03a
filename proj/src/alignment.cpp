#include "unijdot/alignment.hpp"

#include <cmath>
#include <stdexcept>

#include "unijdot/kernels.hpp"

namespace unijdot {

template <class Real>
std::vector<Real> common_cost(const Real* g_s, int n_s, const Real* g_t,
                              int n_t, const Real* h_s, const Real* h_t,
                              int feat_dim, int num_classes, Real mu) {
  std::vector<Real> out(static_cast<size_t>(n_s) * n_t);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n_s; ++i) {
    const Real* gi = g_s + static_cast<size_t>(i) * feat_dim;
    const Real* hi = h_s + static_cast<size_t>(i) * num_classes;
    for (int j = 0; j < n_t; ++j) {
      const Real* gj = g_t + static_cast<size_t>(j) * feat_dim;
      const Real* hj = h_t + static_cast<size_t>(j) * num_classes;
      Real feat = 0;
      for (int k = 0; k < feat_dim; ++k) {
        const Real d = gi[k] - gj[k];
        feat += d * d;
      }
      Real lab = 0;
      for (int k = 0; k < num_classes; ++k) {
        const Real d = hi[k] - hj[k];
        lab += d * d;
      }
      out[static_cast<size_t>(i) * n_t + j] = mu * feat + lab;
    }
  }
  return out;
}

template <class Real>
std::vector<Real> unknown_cost(const Real* anchors, int n_anchors,
                               const Real* g_t, int n_t, const Real* r,
                               const Real* h_t, int feat_dim, int num_classes,
                               Real mu) {
  std::vector<Real> out(static_cast<size_t>(n_anchors) * n_t);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int l = 0; l < n_anchors; ++l) {
    const Real* al = anchors + static_cast<size_t>(l) * feat_dim;
    for (int j = 0; j < n_t; ++j) {
      const Real* gj = g_t + static_cast<size_t>(j) * feat_dim;
      const Real* hj = h_t + static_cast<size_t>(j) * num_classes;
      Real feat = 0;
      for (int k = 0; k < feat_dim; ++k) {
        const Real d = al[k] - gj[k];
        feat += d * d;
      }
      Real lab = 0;
      for (int k = 0; k < num_classes; ++k) {
        const Real d = r[k] - hj[k];
        lab += d * d;
      }
      out[static_cast<size_t>(l) * n_t + j] = mu * feat + lab;
    }
  }
  return out;
}

BlockCost assemble_block_cost(std::vector<double> common, int n_source,
                              int n_common, std::vector<double> unknown,
                              int n_anchors, int n_unknown,
                              const XiPolicy& xi_policy) {
  if (n_common + n_unknown == 0)
    throw std::invalid_argument("assemble_block_cost: both blocks empty");
  if (static_cast<int>(common.size()) != n_source * n_common ||
      static_cast<int>(unknown.size()) != n_anchors * n_unknown)
    throw std::invalid_argument("assemble_block_cost: block shape mismatch");

  BlockCost bc;
  bc.n_source = n_source;
  bc.n_anchors = n_anchors;
  bc.n_common = n_common;
  bc.n_unknown = n_unknown;

  double mx = 0;
  for (double c : common) {
    if (!std::isfinite(c))
      throw std::invalid_argument("assemble_block_cost: non-finite cost");
    mx = std::max(mx, c);
  }
  for (double c : unknown) {
    if (!std::isfinite(c))
      throw std::invalid_argument("assemble_block_cost: non-finite cost");
    mx = std::max(mx, c);
  }
  bc.xi = xi_policy.fixed ? xi_policy.value : 2.0 * mx + 1e-6;

  const int rows = bc.rows(), cols = bc.cols();
  bc.assembled.assign(static_cast<size_t>(rows) * cols, bc.xi);
  for (int i = 0; i < n_source; ++i)
    for (int j = 0; j < n_common; ++j)
      bc.assembled[static_cast<size_t>(i) * cols + j] =
          common[static_cast<size_t>(i) * n_common + j];
  for (int l = 0; l < n_anchors; ++l)
    for (int j = 0; j < n_unknown; ++j)
      bc.assembled[static_cast<size_t>(n_source + l) * cols + n_common + j] =
          unknown[static_cast<size_t>(l) * n_unknown + j];

  bc.common = std::move(common);
  bc.unknown = std::move(unknown);
  return bc;
}

namespace {

// softmax of one logit row, in Real precision
template <class Real>
std::vector<Real> softmax_row(const Real* h, int k) {
  std::vector<Real> s(h, h + k);
  Real mx = s[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, s[i]);
  Real sum = 0;
  for (int i = 0; i < k; ++i) {
    s[i] = std::exp(s[i] - mx);
    sum += s[i];
  }
  for (int i = 0; i < k; ++i) s[i] /= sum;
  return s;
}

template <class Real>
std::vector<int> split_indices(const AlignmentBatch<Real>& b, PseudoLabel want) {
  std::vector<int> idx;
  for (int j = 0; j < b.n_target; ++j)
    if (b.labels[j] == want) idx.push_back(j);
  return idx;
}

// gathers rows into a packed matrix
template <class Real>
std::vector<Real> gather_rows(const Real* src, const std::vector<int>& idx,
                              int width) {
  std::vector<Real> out(idx.size() * width);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src + static_cast<size_t>(idx[i]) * width, width,
                out.begin() + i * width);
  return out;
}

template <class Real>
std::vector<Real> effective_source_logits(const AlignmentBatch<Real>& b) {
  if (!b.cfg.onehot_label_cost)
    return std::vector<Real>(b.h_source,
                             b.h_source + static_cast<size_t>(b.n_source) *
                                              b.num_classes);
  std::vector<Real> oh(static_cast<size_t>(b.n_source) * b.num_classes, Real(0));
  for (int i = 0; i < b.n_source; ++i)
    oh[static_cast<size_t>(i) * b.num_classes + b.y_source[i]] = Real(1);
  return oh;
}

template <class Real>
std::vector<Real> effective_unknown_logits(const Real* h, int n, int k,
                                           bool apply_softmax) {
  std::vector<Real> out(h, h + static_cast<size_t>(n) * k);
  if (!apply_softmax) return out;
  for (int j = 0; j < n; ++j) {
    const auto s = softmax_row(out.data() + static_cast<size_t>(j) * k, k);
    std::copy(s.begin(), s.end(), out.begin() + static_cast<size_t>(j) * k);
  }
  return out;
}

}  // namespace

template <class Real>
BlockCost build_block_cost(const AlignmentBatch<Real>& batch,
                           const XiPolicy& xi_policy) {
  const auto common_idx = split_indices(batch, PseudoLabel::Common);
  const auto unknown_idx = split_indices(batch, PseudoLabel::Unknown);
  const int ntc = static_cast<int>(common_idx.size());
  const int ntu = static_cast<int>(unknown_idx.size());

  const auto gt_c = gather_rows(batch.g_target, common_idx, batch.feat_dim);
  const auto ht_c = gather_rows(batch.h_target, common_idx, batch.num_classes);
  const auto gt_u = gather_rows(batch.g_target, unknown_idx, batch.feat_dim);
  const auto ht_u_raw = gather_rows(batch.h_target, unknown_idx, batch.num_classes);
  const auto hs = effective_source_logits(batch);
  const auto ht_u = effective_unknown_logits(ht_u_raw.data(), ntu,
                                             batch.num_classes,
                                             batch.cfg.softmax_unknown_term);

  std::vector<Real> cc, cu;
  if (ntc > 0)
    cc = common_cost(batch.g_source, batch.n_source, gt_c.data(), ntc,
                     hs.data(), ht_c.data(), batch.feat_dim, batch.num_classes,
                     static_cast<Real>(batch.cfg.mu));
  if (ntu > 0)
    cu = unknown_cost(batch.anchors, batch.n_anchors, gt_u.data(), ntu,
                      batch.r, ht_u.data(), batch.feat_dim, batch.num_classes,
                      static_cast<Real>(batch.cfg.mu));

  BlockCost bc = assemble_block_cost(
      std::vector<double>(cc.begin(), cc.end()), batch.n_source, ntc,
      std::vector<double>(cu.begin(), cu.end()), batch.n_anchors, ntu,
      xi_policy);
  bc.column_permutation.reserve(batch.n_target);
  for (int j : common_idx) bc.column_permutation.push_back(j);
  for (int j : unknown_idx) bc.column_permutation.push_back(j);
  return bc;
}

double plan_cost(const BlockCost& block, const TransportPlan& plan) {
  if (plan.rows != block.rows() || plan.cols != block.cols())
    throw std::invalid_argument("plan_cost: plan/block shape mismatch");
  double acc = 0;
  for (size_t i = 0; i < block.assembled.size(); ++i)
    acc += plan.gamma[i] * block.assembled[i];
  return acc;
}

template <class Real>
AlignmentGrads<Real> alignment_grads(const AlignmentBatch<Real>& batch,
                                     const BlockCost& block,
                                     const TransportPlan& plan) {
  const int d = batch.feat_dim, k = batch.num_classes;
  const Real mu = static_cast<Real>(batch.cfg.mu);
  const int cols = block.cols();

  AlignmentGrads<Real> g;
  g.g_source_feat.assign(static_cast<size_t>(batch.n_source) * d, Real(0));
  g.g_source_logit.assign(static_cast<size_t>(batch.n_source) * k, Real(0));
  g.g_target_feat.assign(static_cast<size_t>(batch.n_target) * d, Real(0));
  g.g_target_logit.assign(static_cast<size_t>(batch.n_target) * k, Real(0));

  const auto hs = effective_source_logits(batch);

  // common block: C_ij = mu*||gs_i - gt_j||^2 + ||hs_i - ht_j||^2
  for (int i = 0; i < batch.n_source; ++i) {
    const Real* gi = batch.g_source + static_cast<size_t>(i) * d;
    const Real* hi = hs.data() + static_cast<size_t>(i) * k;
    for (int p = 0; p < block.n_common; ++p) {
      const Real w = static_cast<Real>(plan.gamma[static_cast<size_t>(i) * cols + p]);
      if (w == Real(0)) continue;
      const int j = block.column_permutation[p];
      const Real* gj = batch.g_target + static_cast<size_t>(j) * d;
      const Real* hj = batch.h_target + static_cast<size_t>(j) * k;
      for (int c = 0; c < d; ++c) {
        const Real diff = Real(2) * mu * (gi[c] - gj[c]) * w;
        g.g_source_feat[static_cast<size_t>(i) * d + c] += diff;
        g.g_target_feat[static_cast<size_t>(j) * d + c] -= diff;
      }
      for (int c = 0; c < k; ++c) {
        const Real diff = Real(2) * (hi[c] - hj[c]) * w;
        if (!batch.cfg.onehot_label_cost)
          g.g_source_logit[static_cast<size_t>(i) * k + c] += diff;
        g.g_target_logit[static_cast<size_t>(j) * k + c] -= diff;
      }
    }
  }

  // unknown block: C_lj = mu*||a_l - gt_j||^2 + ||r - ht_j||^2; anchors and r
  // are constants here.
  for (int p = 0; p < block.n_unknown; ++p) {
    const int j = block.column_permutation[block.n_common + p];
    const Real* gj = batch.g_target + static_cast<size_t>(j) * d;
    const Real* hj = batch.h_target + static_cast<size_t>(j) * k;
    Real col_mass = 0;
    for (int l = 0; l < batch.n_anchors; ++l) {
      const Real w = static_cast<Real>(
          plan.gamma[static_cast<size_t>(batch.n_source + l) * cols +
                     block.n_common + p]);
      if (w == Real(0)) continue;
      col_mass += w;
      const Real* al = batch.anchors + static_cast<size_t>(l) * d;
      for (int c = 0; c < d; ++c)
        g.g_target_feat[static_cast<size_t>(j) * d + c] -=
            Real(2) * mu * (al[c] - gj[c]) * w;
    }
    if (col_mass == Real(0)) continue;
    if (!batch.cfg.softmax_unknown_term) {
      for (int c = 0; c < k; ++c)
        g.g_target_logit[static_cast<size_t>(j) * k + c] -=
            Real(2) * (batch.r[c] - hj[c]) * col_mass;
    } else {
      // d||r - s||^2 / dh through the softmax Jacobian, s = softmax(h)
      const auto s = softmax_row(hj, k);
      std::vector<Real> ds(k);
      for (int c = 0; c < k; ++c) ds[c] = Real(2) * (s[c] - batch.r[c]);
      Real dot = 0;
      for (int c = 0; c < k; ++c) dot += ds[c] * s[c];
      for (int c = 0; c < k; ++c)
        g.g_target_logit[static_cast<size_t>(j) * k + c] +=
            col_mass * s[c] * (ds[c] - dot);
    }
  }
  return g;
}

template <class Real>
AlignmentResult<Real> alignment_loss(const AlignmentBatch<Real>& batch,
                                     const OTConfig& cfg) {
  AlignmentResult<Real> res;
  res.block = build_block_cost(batch, XiPolicy::auto_margin());
  const int rows = res.block.rows(), cols = res.block.cols();
  const std::vector<double> a(rows, 1.0 / rows);
  const std::vector<double> b(cols, 1.0 / cols);
  res.plan = sinkhorn_unbalanced(a, b, res.block.assembled, rows, cols, cfg);
  res.loss = plan_cost(res.block, res.plan);
  res.grads = alignment_grads(batch, res.block, res.plan);
  return res;
}

template std::vector<float> common_cost<float>(const float*, int, const float*,
                                               int, const float*, const float*,
                                               int, int, float);
template std::vector<double> common_cost<double>(const double*, int,
                                                 const double*, int,
                                                 const double*, const double*,
                                                 int, int, double);
template std::vector<float> unknown_cost<float>(const float*, int, const float*,
                                                int, const float*, const float*,
                                                int, int, float);
template std::vector<double> unknown_cost<double>(const double*, int,
                                                  const double*, int,
                                                  const double*, const double*,
                                                  int, int, double);
template BlockCost build_block_cost<float>(const AlignmentBatch<float>&,
                                           const XiPolicy&);
template BlockCost build_block_cost<double>(const AlignmentBatch<double>&,
                                            const XiPolicy&);
template AlignmentGrads<float> alignment_grads<float>(
    const AlignmentBatch<float>&, const BlockCost&, const TransportPlan&);
template AlignmentGrads<double> alignment_grads<double>(
    const AlignmentBatch<double>&, const BlockCost&, const TransportPlan&);
template AlignmentResult<float> alignment_loss<float>(
    const AlignmentBatch<float>&, const OTConfig&);
template AlignmentResult<double> alignment_loss<double>(
    const AlignmentBatch<double>&, const OTConfig&);

StepReport training_step(Net& net, const float* x_source,
                         const std::vector<int>& y_source, int n_source,
                         const float* x_target, int n_target, ClassMemory& mem,
                         AnchorSet& anchors, const TrainConfig& tc,
                         const OTConfig& oc, const AlignmentConfig& ac,
                         const PseudoLabelConfig& plc,
                         const double* fixed_tau) {
  if (!mem.initialized)
    throw std::invalid_argument("training_step: memory not initialized");
  const int k = net.cfg.num_classes;
  const int d = net.cfg.feature_dim();

  ForwardCache cs, ct;
  feature_forward(net, x_source, n_source, cs);
  classifier_forward(net, cs);
  feature_forward(net, x_target, n_target, ct);
  classifier_forward(net, ct);

  auto pl = pseudo_label_batch(ct.logits, ct.features, n_target, k, d, mem,
                               plc, fixed_tau);

  memory_update(mem, cs.features, n_source, y_source);

  const auto unknown_feats = [&] {
    std::vector<float> out;
    for (int j = 0; j < n_target; ++j)
      if (pl.labels[j] == PseudoLabel::Unknown)
        out.insert(out.end(),
                   ct.features.begin() + static_cast<size_t>(j) * d,
                   ct.features.begin() + static_cast<size_t>(j + 1) * d);
    return out;
  }();
  update_anchors(anchors, unknown_feats,
                 static_cast<int>(unknown_feats.size()) / d);

  StepReport rep;
  rep.tau = pl.tau;
  rep.degenerate_threshold = pl.degenerate_threshold;
  rep.n_common = pl.count(PseudoLabel::Common);
  rep.n_unknown = pl.count(PseudoLabel::Unknown);

  std::vector<float> ce_grad;
  rep.ce_loss = cross_entropy(cs.logits, y_source, k, &ce_grad);

  zero_grads(net);

  if (tc.lambda >= 1.0) {
    // pure cross-entropy step; the transport term carries zero weight
    for (float& gv : ce_grad) gv = static_cast<float>(tc.lambda) * gv;
    net_backward(net, x_source, cs, {}, ce_grad);
    rep.combined_loss = tc.lambda * rep.ce_loss;
  } else {
    AlignmentBatch<float> ab;
    ab.n_source = n_source;
    ab.n_target = n_target;
    ab.feat_dim = d;
    ab.num_classes = k;
    ab.n_anchors = anchors.num_anchors;
    ab.g_source = cs.features.data();
    ab.h_source = cs.logits.data();
    ab.g_target = ct.features.data();
    ab.h_target = ct.logits.data();
    ab.anchors = anchors.centroids.data();
    ab.r = anchors.decision_anchor.data();
    ab.labels = pl.labels.data();
    ab.y_source = y_source.data();
    ab.cfg = ac;

    auto al = alignment_loss(ab, oc);
    rep.ot_loss = al.loss;
    rep.ot_converged = al.plan.converged;
    rep.transported_mass = al.plan.total_mass();
    rep.combined_loss = tc.lambda * rep.ce_loss + (1.0 - tc.lambda) * al.loss;

    const float wot = static_cast<float>(1.0 - tc.lambda);
    const float wce = static_cast<float>(tc.lambda);
    std::vector<float> gs_logit(ce_grad.size());
    for (size_t i = 0; i < ce_grad.size(); ++i)
      gs_logit[i] = wce * ce_grad[i] + wot * al.grads.g_source_logit[i];
    std::vector<float> gs_feat(al.grads.g_source_feat.size());
    for (size_t i = 0; i < gs_feat.size(); ++i)
      gs_feat[i] = wot * al.grads.g_source_feat[i];
    std::vector<float> gt_logit(al.grads.g_target_logit.size());
    for (size_t i = 0; i < gt_logit.size(); ++i)
      gt_logit[i] = wot * al.grads.g_target_logit[i];
    std::vector<float> gt_feat(al.grads.g_target_feat.size());
    for (size_t i = 0; i < gt_feat.size(); ++i)
      gt_feat[i] = wot * al.grads.g_target_feat[i];

    net_backward(net, x_source, cs, gs_feat, gs_logit);
    net_backward(net, x_target, ct, gt_feat, gt_logit);
  }

  optimizer_step(net, tc.learning_rate, tc.momentum);
  return rep;
}

}  // namespace unijdot
