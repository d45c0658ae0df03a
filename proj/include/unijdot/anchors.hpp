#pragma once

#include <cstdint>
#include <vector>

namespace unijdot {

// Feature-space centroids acting as transport destinations for
// unknown-labeled target samples, plus the uniform decision-space anchor.
struct AnchorSet {
  int num_anchors = 0;  // L
  int dim = 0;
  std::vector<float> centroids;        // L x dim
  float momentum = 0.1f;               // weight on the new assigned mean
  std::vector<float> decision_anchor;  // uniform 1/K
  bool initialized = false;
};

// K-means over all target features (not only unknown-labeled ones).
AnchorSet init_anchors(const std::vector<float>& target_features, int n,
                       int dim, int num_anchors, int num_classes,
                       float momentum, uint64_t seed);

// Moving-average update from unknown-labeled features: each centroid with at
// least one assigned feature moves toward the assigned mean; the rest stay.
// An empty batch is a no-op.
void update_anchors(AnchorSet& set, const std::vector<float>& unknown_features,
                    int n);

// r = (1/K) * ones: the most uncertain class probability vector.
std::vector<float> decision_anchor(int num_classes);

}  // namespace unijdot
