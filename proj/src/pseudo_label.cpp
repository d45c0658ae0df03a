#include "unijdot/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unijdot/kernels.hpp"
#include "unijdot/numerics.hpp"
#include "unijdot/rng.hpp"

namespace unijdot {

ClassMemory memory_init(const std::vector<float>& features, int n, int dim,
                        const std::vector<int>& labels, int num_classes,
                        int capacity, uint64_t seed) {
  if (static_cast<int>(labels.size()) != n ||
      static_cast<int>(features.size()) != n * dim)
    throw std::invalid_argument("memory_init: shape mismatch");
  if (capacity < 1) throw std::invalid_argument("memory_init: capacity < 1");

  std::vector<std::vector<int>> per_class(num_classes);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("memory_init: label out of range");
    per_class[labels[i]].push_back(i);
  }
  for (int k = 0; k < num_classes; ++k)
    if (per_class[k].empty())
      throw std::invalid_argument("memory_init: class " + std::to_string(k) +
                                  " has no source samples");

  ClassMemory mem;
  mem.num_classes = num_classes;
  mem.dim = dim;
  mem.capacity = capacity;
  mem.store.resize(num_classes);
  mem.cursor.assign(num_classes, 0);

  Rng rng(seed);
  for (int k = 0; k < num_classes; ++k) {
    auto& idx = per_class[k];
    if (static_cast<int>(idx.size()) > capacity) {
      rng.shuffle(idx);
      idx.resize(capacity);
    }
    auto& buf = mem.store[k];
    buf.reserve(idx.size() * dim);
    for (int i : idx)
      buf.insert(buf.end(), features.begin() + static_cast<size_t>(i) * dim,
                 features.begin() + static_cast<size_t>(i + 1) * dim);
    mem.cursor[k] = static_cast<int>(idx.size()) % capacity;
  }
  mem.initialized = true;
  return mem;
}

void memory_update(ClassMemory& mem, const std::vector<float>& features,
                   int n, const std::vector<int>& labels) {
  if (!mem.initialized)
    throw std::invalid_argument("memory_update: memory not initialized");
  if (static_cast<int>(labels.size()) != n ||
      static_cast<int>(features.size()) != n * mem.dim)
    throw std::invalid_argument("memory_update: shape mismatch");

  for (int i = 0; i < n; ++i) {
    const int k = labels[i];
    if (k < 0 || k >= mem.num_classes)
      throw std::invalid_argument("memory_update: label out of range");
    auto& buf = mem.store[k];
    const float* src = features.data() + static_cast<size_t>(i) * mem.dim;
    if (static_cast<int>(buf.size()) < mem.capacity * mem.dim) {
      buf.insert(buf.end(), src, src + mem.dim);
      mem.cursor[k] = (static_cast<int>(buf.size()) / mem.dim) % mem.capacity;
    } else {
      std::copy_n(src, mem.dim,
                  buf.begin() + static_cast<size_t>(mem.cursor[k]) * mem.dim);
      mem.cursor[k] = (mem.cursor[k] + 1) % mem.capacity;
    }
  }
}

std::vector<float> distance_vector(const float* g, const ClassMemory& mem) {
  if (!mem.initialized)
    throw std::invalid_argument("distance_vector: memory not initialized");
  std::vector<float> d(mem.num_classes);
  for (int k = 0; k < mem.num_classes; ++k) {
    const auto& buf = mem.store[k];
    const int cnt = mem.count(k);
    float best = std::numeric_limits<float>::max();
    for (int i = 0; i < cnt; ++i) {
      const float* v = buf.data() + static_cast<size_t>(i) * mem.dim;
      float acc = 0;
      for (int j = 0; j < mem.dim; ++j) {
        const float diff = g[j] - v[j];
        acc += diff * diff;
      }
      best = std::min(best, acc);
    }
    d[k] = best;
  }
  return d;
}

template <class Real>
std::vector<Real> joint_decision(const std::vector<Real>& logits,
                                 const std::vector<Real>& dist) {
  if (logits.size() != dist.size())
    throw std::invalid_argument("joint_decision: size mismatch");
  std::vector<Real> neg(dist.size());
  for (size_t i = 0; i < dist.size(); ++i) neg[i] = -dist[i];
  const auto w = softmax(neg);
  std::vector<Real> mixed(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) mixed[i] = logits[i] * w[i];
  return softmax(mixed);
}

template std::vector<float> joint_decision<float>(const std::vector<float>&,
                                                  const std::vector<float>&);
template std::vector<double> joint_decision<double>(const std::vector<double>&,
                                                    const std::vector<double>&);

PseudoLabelBatch pseudo_label_batch(const std::vector<float>& logits,
                                    const std::vector<float>& features,
                                    int batch, int num_classes, int feat_dim,
                                    const ClassMemory& mem,
                                    const PseudoLabelConfig& cfg,
                                    const double* fixed_tau) {
  if (batch < 1) throw std::invalid_argument("pseudo_label_batch: empty batch");
  if (static_cast<int>(logits.size()) != batch * num_classes ||
      static_cast<int>(features.size()) != batch * feat_dim)
    throw std::invalid_argument("pseudo_label_batch: shape mismatch");

  PseudoLabelBatch out;
  out.p_prime.resize(static_cast<size_t>(batch) * num_classes);
  out.confidences.resize(batch);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < batch; ++i) {
    std::vector<float> h(logits.begin() + static_cast<size_t>(i) * num_classes,
                         logits.begin() +
                             static_cast<size_t>(i + 1) * num_classes);
    std::vector<float> p;
    if (cfg.joint_decision) {
      const auto d =
          distance_vector(features.data() + static_cast<size_t>(i) * feat_dim,
                          mem);
      p = joint_decision(h, d);
    } else {
      p = softmax(h);
    }
    std::copy(p.begin(), p.end(),
              out.p_prime.begin() + static_cast<size_t>(i) * num_classes);
    out.confidences[i] = *std::max_element(p.begin(), p.end());
  }

  if (fixed_tau) {
    out.tau = *fixed_tau;
  } else {
    std::vector<double> conf(out.confidences.begin(), out.confidences.end());
    const auto thr = auto_threshold(conf, cfg.method, cfg.bin_count);
    out.tau = thr.tau;
    out.degenerate_threshold = thr.degenerate;
  }

  out.labels.resize(batch);
  for (int i = 0; i < batch; ++i) {
    const bool unknown = !out.degenerate_threshold &&
                         static_cast<double>(out.confidences[i]) < out.tau;
    out.labels[i] = unknown ? PseudoLabel::Unknown : PseudoLabel::Common;
  }
  return out;
}

}  // namespace unijdot
