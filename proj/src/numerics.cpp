#include "unijdot/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unijdot/rng.hpp"

namespace unijdot {

template <class Real>
std::vector<Real> softmax(const std::vector<Real>& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  for (Real x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::invalid_argument("softmax: non-finite input");
  std::vector<Real> out(v.size());
  kernels::serial::softmax_rows(v.data(), 1, static_cast<int>(v.size()),
                                out.data());
  return out;
}

template std::vector<float> softmax<float>(const std::vector<float>&);
template std::vector<double> softmax<double>(const std::vector<double>&);

template <class Real>
TensorT<Real> pairwise_sq_dist(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw std::invalid_argument("pairwise_sq_dist: inputs must be matrices");
  if (a.shape[1] != b.shape[1])
    throw std::invalid_argument("pairwise_sq_dist: inner dimension mismatch");
  const int n = static_cast<int>(a.shape[0]);
  const int m = static_cast<int>(b.shape[0]);
  const int d = static_cast<int>(a.shape[1]);
  TensorT<Real> out = TensorT<Real>::zeros({n, m});
  kernels::pairwise_sq_dist(a.data.data(), n, b.data.data(), m, d,
                            out.data.data());
  return out;
}

template Tensor pairwise_sq_dist<float>(const Tensor&, const Tensor&);
template Tensor64 pairwise_sq_dist<double>(const Tensor64&, const Tensor64&);

static Histogram histogram_impl(const std::vector<double>& values,
                                int bin_count, double lo, double hi) {
  Histogram h;
  h.bin_count = bin_count;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bin_count, 0);
  h.total = static_cast<int64_t>(values.size());
  const double w = (hi - lo) / bin_count;
  for (double v : values) {
    int bin;
    if (v < lo) {
      bin = 0;
    } else if (v >= hi) {
      bin = bin_count - 1;  // closed last bin, clamp above
    } else {
      bin = static_cast<int>((v - lo) / w);
      if (bin >= bin_count) bin = bin_count - 1;
    }
    ++h.counts[bin];
  }
  return h;
}

Histogram build_histogram(const std::vector<double>& values, int bin_count) {
  if (values.empty())
    throw std::invalid_argument("build_histogram: empty input");
  if (bin_count < 2)
    throw std::invalid_argument("build_histogram: bin_count must be >= 2");
  auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  double lo = *mn, hi = *mx;
  if (!(lo < hi)) hi = lo + 1e-9;
  return histogram_impl(values, bin_count, lo, hi);
}

Histogram build_histogram(const std::vector<double>& values, int bin_count,
                          double lo, double hi) {
  if (values.empty())
    throw std::invalid_argument("build_histogram: empty input");
  if (bin_count < 2)
    throw std::invalid_argument("build_histogram: bin_count must be >= 2");
  if (!(lo < hi))
    throw std::invalid_argument("build_histogram: requires lo < hi");
  return histogram_impl(values, bin_count, lo, hi);
}

double kmeans_objective(const Tensor& points, const Tensor& centroids) {
  const int n = static_cast<int>(points.shape[0]);
  const int L = static_cast<int>(centroids.shape[0]);
  const int d = static_cast<int>(points.shape[1]);
  std::vector<int> assign(n);
  std::vector<float> dist(n);
  kernels::assign_nearest(points.data.data(), n, centroids.data.data(), L, d,
                          assign.data(), dist.data());
  double obj = 0;
  for (int i = 0; i < n; ++i) obj += dist[i];
  return obj;
}

KMeansResult kmeans(const Tensor& points, int L, int max_iters,
                    uint64_t seed) {
  if (points.shape.size() != 2)
    throw std::invalid_argument("kmeans: points must be n x d");
  const int n = static_cast<int>(points.shape[0]);
  const int d = static_cast<int>(points.shape[1]);
  if (L < 1 || n < L)
    throw std::invalid_argument("kmeans: requires n >= L >= 1");

  Rng rng(seed);
  Tensor cen = Tensor::zeros({L, d});
  const float* pts = points.data.data();

  // k-means++ seeding
  {
    int first = static_cast<int>(rng.uniform_int(n));
    std::copy_n(pts + static_cast<size_t>(first) * d, d, cen.data.begin());
    std::vector<double> d2(n);
    for (int l = 1; l < L; ++l) {
      double sum = 0;
      for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        for (int c = 0; c < l; ++c) {
          double acc = 0;
          for (int k = 0; k < d; ++k) {
            const double diff = pts[static_cast<size_t>(i) * d + k] -
                                cen.data[static_cast<size_t>(c) * d + k];
            acc += diff * diff;
          }
          best = std::min(best, acc);
        }
        d2[i] = best;
        sum += best;
      }
      int pick;
      if (sum <= 0) {
        pick = static_cast<int>(rng.uniform_int(n));
      } else {
        const double r = rng.uniform() * sum;
        double acc = 0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= r) {
            pick = i;
            break;
          }
        }
      }
      std::copy_n(pts + static_cast<size_t>(pick) * d,
                  d, cen.data.begin() + static_cast<size_t>(l) * d);
    }
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  std::vector<int> assign(n);
  std::vector<float> dist(n);
  std::vector<double> sums(static_cast<size_t>(L) * d);
  std::vector<int> counts(L);

  for (int it = 0; it < max_iters; ++it) {
    kernels::assign_nearest(pts, n, cen.data.data(), L, d, assign.data(),
                            dist.data());

    // re-seed emptied clusters to the farthest point from their old centroid
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) ++counts[assign[i]];
    for (int l = 0; l < L; ++l) {
      if (counts[l] > 0) continue;
      int far = -1;
      double fard = -1;
      for (int i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;  // keep donors non-empty
        double acc = 0;
        for (int k = 0; k < d; ++k) {
          const double diff = pts[static_cast<size_t>(i) * d + k] -
                              cen.data[static_cast<size_t>(l) * d + k];
          acc += diff * diff;
        }
        if (acc > fard) {
          fard = acc;
          far = i;
        }
      }
      if (far >= 0) {
        --counts[assign[far]];
        assign[far] = l;
        ++counts[l];
        std::copy_n(pts + static_cast<size_t>(far) * d, d,
                    cen.data.begin() + static_cast<size_t>(l) * d);
      }
    }

    std::fill(sums.begin(), sums.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<size_t>(assign[i]) * d;
      const float* p = pts + static_cast<size_t>(i) * d;
      for (int k = 0; k < d; ++k) s[k] += p[k];
    }
    for (int l = 0; l < L; ++l) {
      if (counts[l] == 0) continue;
      for (int k = 0; k < d; ++k)
        cen.data[static_cast<size_t>(l) * d + k] =
            static_cast<float>(sums[static_cast<size_t>(l) * d + k] / counts[l]);
    }

    res.iterations = it + 1;
    res.objective_trace.push_back(kmeans_objective(points, cen));
    if (assign == res.assignment) break;  // converged
    res.assignment = assign;
  }

  res.centroids = std::move(cen);
  res.objective = kmeans_objective(points, res.centroids);
  return res;
}

}  // namespace unijdot
