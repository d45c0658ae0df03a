#include "unijdot/anchors.hpp"

#include <stdexcept>

#include "unijdot/kernels.hpp"
#include "unijdot/numerics.hpp"

namespace unijdot {

AnchorSet init_anchors(const std::vector<float>& target_features, int n,
                       int dim, int num_anchors, int num_classes,
                       float momentum, uint64_t seed) {
  if (num_anchors < 1)
    throw std::invalid_argument("init_anchors: need at least one anchor");
  if (n < num_anchors)
    throw std::invalid_argument("init_anchors: fewer samples than anchors");
  if (!(momentum > 0.f && momentum <= 1.f))
    throw std::invalid_argument("init_anchors: momentum must be in (0,1]");

  Tensor pts({n, dim}, target_features);
  auto km = kmeans(pts, num_anchors, 100, seed);

  AnchorSet set;
  set.num_anchors = num_anchors;
  set.dim = dim;
  set.centroids = std::move(km.centroids.data);
  set.momentum = momentum;
  set.decision_anchor = decision_anchor(num_classes);
  set.initialized = true;
  return set;
}

void update_anchors(AnchorSet& set, const std::vector<float>& unknown_features,
                    int n) {
  if (!set.initialized)
    throw std::invalid_argument("update_anchors: not initialized");
  if (n == 0) return;
  if (static_cast<int>(unknown_features.size()) != n * set.dim)
    throw std::invalid_argument("update_anchors: shape mismatch");

  std::vector<int> assign(n);
  kernels::assign_nearest(unknown_features.data(), n, set.centroids.data(),
                          set.num_anchors, set.dim, assign.data(),
                          static_cast<float*>(nullptr));

  std::vector<double> sums(static_cast<size_t>(set.num_anchors) * set.dim, 0.0);
  std::vector<int> counts(set.num_anchors, 0);
  for (int i = 0; i < n; ++i) {
    ++counts[assign[i]];
    const float* f = unknown_features.data() + static_cast<size_t>(i) * set.dim;
    double* s = sums.data() + static_cast<size_t>(assign[i]) * set.dim;
    for (int j = 0; j < set.dim; ++j) s[j] += f[j];
  }
  for (int l = 0; l < set.num_anchors; ++l) {
    if (counts[l] == 0) continue;
    float* c = set.centroids.data() + static_cast<size_t>(l) * set.dim;
    const double* s = sums.data() + static_cast<size_t>(l) * set.dim;
    for (int j = 0; j < set.dim; ++j) {
      const double mean = s[j] / counts[l];
      c[j] = static_cast<float>((1.0 - set.momentum) * c[j] +
                                set.momentum * mean);
    }
  }
}

std::vector<float> decision_anchor(int num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("decision_anchor: need at least two classes");
  return std::vector<float>(num_classes, 1.0f / static_cast<float>(num_classes));
}

}  // namespace unijdot
