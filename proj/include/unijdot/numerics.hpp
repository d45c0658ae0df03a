#pragma once

#include <cstdint>
#include <vector>

#include "unijdot/kernels.hpp"
#include "unijdot/tensor.hpp"

namespace unijdot {

// Max-subtracted softmax. Throws on empty or non-finite input.
template <class Real>
std::vector<Real> softmax(const std::vector<Real>& v);

extern template std::vector<float> softmax<float>(const std::vector<float>&);
extern template std::vector<double> softmax<double>(const std::vector<double>&);

// Squared Euclidean distances between the rows of a (n x d) and b (m x d).
template <class Real>
TensorT<Real> pairwise_sq_dist(const TensorT<Real>& a, const TensorT<Real>& b);

extern template Tensor pairwise_sq_dist<float>(const Tensor&, const Tensor&);
extern template Tensor64 pairwise_sq_dist<double>(const Tensor64&,
                                                  const Tensor64&);

struct Histogram {
  int bin_count = 0;
  double lo = 0, hi = 0;
  std::vector<int64_t> counts;
  int64_t total = 0;

  double bin_width() const { return (hi - lo) / bin_count; }
  // Lower edge of bin i; the threshold convention reports lo + (i+1)*w for a
  // split after bin i.
  double edge(int i) const { return lo + bin_width() * i; }
  int occupied_bins() const {
    int n = 0;
    for (int64_t c : counts) n += (c > 0);
    return n;
  }
};

// Bin i covers [lo + i*w, lo + (i+1)*w); the last bin is closed. Values
// outside an explicit range are clamped into the end bins so that mass is
// conserved. A degenerate range (all values equal, no explicit range) is
// widened by 1e-9.
Histogram build_histogram(const std::vector<double>& values, int bin_count);
Histogram build_histogram(const std::vector<double>& values, int bin_count,
                          double lo, double hi);

struct KMeansResult {
  Tensor centroids;            // L x d
  std::vector<int> assignment; // per point
  double objective = 0;        // within-cluster sum of squared distances
  int iterations = 0;
  std::vector<double> objective_trace;  // objective after each iteration
};

// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded
// to the point farthest from its previous centroid. Identical seeds give
// bit-identical centroids.
KMeansResult kmeans(const Tensor& points, int L, int max_iters, uint64_t seed);

double kmeans_objective(const Tensor& points, const Tensor& centroids);

}  // namespace unijdot
