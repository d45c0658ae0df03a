#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

// Data-parallel inner loops shared by the numeric modules. Every kernel exists
// twice: the default entry points parallelize with OpenMP, kernels::serial
// holds the plain reference loops the tests compare against. Parallel variants
// assign each output element to exactly one thread and keep inner loops in a
// fixed order, so results are bit-identical to the serial path for any thread
// count.

namespace unijdot::kernels {

namespace serial {

template <class Real>
void pairwise_sq_dist(const Real* a, int n, const Real* b, int m, int d,
                      Real* out) {
  for (int i = 0; i < n; ++i) {
    const Real* ai = a + static_cast<size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const Real* bj = b + static_cast<size_t>(j) * d;
      Real acc = 0;
      for (int k = 0; k < d; ++k) {
        const Real diff = ai[k] - bj[k];
        acc += diff * diff;
      }
      out[static_cast<size_t>(i) * m + j] = acc;
    }
  }
}

template <class Real>
void softmax_rows(const Real* in, int rows, int cols, Real* out) {
  for (int r = 0; r < rows; ++r) {
    const Real* x = in + static_cast<size_t>(r) * cols;
    Real* y = out + static_cast<size_t>(r) * cols;
    Real mx = x[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    Real sum = 0;
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (int c = 0; c < cols; ++c) y[c] /= sum;
  }
}

// out[i] = logsumexp_j(logk[i,j] + logv[j])
inline void lse_rows(const double* logk, int n, int m, const double* logv,
                     double* out) {
  for (int i = 0; i < n; ++i) {
    const double* row = logk + static_cast<size_t>(i) * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, row[j] + logv[j]);
    double acc = 0;
    for (int j = 0; j < m; ++j) acc += std::exp(row[j] + logv[j] - mx);
    out[i] = mx + std::log(acc);
  }
}

// out[j] = logsumexp_i(logk[i,j] + logu[i])
inline void lse_cols(const double* logk, int n, int m, const double* logu,
                     double* out) {
  for (int j = 0; j < m; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      mx = std::max(mx, logk[static_cast<size_t>(i) * m + j] + logu[i]);
    double acc = 0;
    for (int i = 0; i < n; ++i)
      acc += std::exp(logk[static_cast<size_t>(i) * m + j] + logu[i] - mx);
    out[j] = mx + std::log(acc);
  }
}

// x: B x Cin x T, w: Cout x Cin x k, y: B x Cout x Tout with
// Tout = T + 2*pad - k + 1. Zero padding outside [0, T).
template <class Real>
void conv1d_forward(const Real* x, int batch, int cin, int t, const Real* w,
                    const Real* bias, int cout, int k, int pad, Real* y) {
  const int tout = t + 2 * pad - k + 1;
  // positions whose whole tap window is in bounds need no boundary checks
  const int lo = std::min(pad, tout);
  const int hi = std::max(lo, std::min(tout, t - k + 1 + pad));
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < cout; ++o) {
      Real* yrow = y + (static_cast<size_t>(b) * cout + o) * tout;
      for (int p = 0; p < tout; ++p) yrow[p] = bias[o];
      for (int c = 0; c < cin; ++c) {
        const Real* xrow = x + (static_cast<size_t>(b) * cin + c) * t;
        const Real* wrow = w + (static_cast<size_t>(o) * cin + c) * k;
        for (int p = 0; p < lo; ++p) {
          Real acc = 0;
          for (int j = 0; j < k; ++j) {
            const int src = p - pad + j;
            if (src >= 0 && src < t) acc += wrow[j] * xrow[src];
          }
          yrow[p] += acc;
        }
        for (int p = lo; p < hi; ++p) {
          Real acc = 0;
          const Real* base = xrow + p - pad;
          for (int j = 0; j < k; ++j) acc += wrow[j] * base[j];
          yrow[p] += acc;
        }
        for (int p = hi; p < tout; ++p) {
          Real acc = 0;
          for (int j = 0; j < k; ++j) {
            const int src = p - pad + j;
            if (src >= 0 && src < t) acc += wrow[j] * xrow[src];
          }
          yrow[p] += acc;
        }
      }
    }
  }
}

template <class Real>
void conv1d_backward_data(const Real* gy, int batch, int cout, int tout,
                          const Real* w, int cin, int k, int pad, int t,
                          Real* gx) {
  std::fill(gx, gx + static_cast<size_t>(batch) * cin * t, Real(0));
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < cin; ++c) {
      Real* gxrow = gx + (static_cast<size_t>(b) * cin + c) * t;
      for (int o = 0; o < cout; ++o) {
        const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
        const Real* wrow = w + (static_cast<size_t>(o) * cin + c) * k;
        for (int p = 0; p < tout; ++p) {
          const int j0 = std::max(0, pad - p);
          const int j1 = std::min(k, t + pad - p);
          const Real g = gyrow[p];
          Real* dst = gxrow + p - pad;
          for (int j = j0; j < j1; ++j) dst[j] += wrow[j] * g;
        }
      }
    }
  }
}

template <class Real>
void conv1d_backward_weights(const Real* x, int batch, int cin, int t,
                             const Real* gy, int cout, int tout, int k,
                             int pad, Real* gw, Real* gb) {
  for (int o = 0; o < cout; ++o) {
    Real bacc = 0;
    for (int b = 0; b < batch; ++b) {
      const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
      for (int p = 0; p < tout; ++p) bacc += gyrow[p];
    }
    gb[o] += bacc;
    for (int c = 0; c < cin; ++c) {
      Real* gwrow = gw + (static_cast<size_t>(o) * cin + c) * k;
      for (int j = 0; j < k; ++j) {
        const int p0 = std::max(0, pad - j);
        const int p1 = std::min(tout, t + pad - j);
        Real acc = 0;
        for (int b = 0; b < batch; ++b) {
          const Real* xrow = x + (static_cast<size_t>(b) * cin + c) * t + j - pad;
          const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
          for (int p = p0; p < p1; ++p) acc += xrow[p] * gyrow[p];
        }
        gwrow[j] += acc;
      }
    }
  }
}

// assign[i] = index of nearest centroid, dist[i] = squared distance (optional).
template <class Real>
void assign_nearest(const Real* pts, int n, const Real* cen, int L, int d,
                    int* assign, Real* dist) {
  for (int i = 0; i < n; ++i) {
    const Real* p = pts + static_cast<size_t>(i) * d;
    int best = 0;
    Real bestd = std::numeric_limits<Real>::max();
    for (int l = 0; l < L; ++l) {
      const Real* c = cen + static_cast<size_t>(l) * d;
      Real acc = 0;
      for (int k = 0; k < d; ++k) {
        const Real diff = p[k] - c[k];
        acc += diff * diff;
      }
      if (acc < bestd) {
        bestd = acc;
        best = l;
      }
    }
    assign[i] = best;
    if (dist) dist[i] = bestd;
  }
}

}  // namespace serial

template <class Real>
void pairwise_sq_dist(const Real* a, int n, const Real* b, int m, int d,
                      Real* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) {
    const Real* ai = a + static_cast<size_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const Real* bj = b + static_cast<size_t>(j) * d;
      Real acc = 0;
      for (int k = 0; k < d; ++k) {
        const Real diff = ai[k] - bj[k];
        acc += diff * diff;
      }
      out[static_cast<size_t>(i) * m + j] = acc;
    }
  }
}

template <class Real>
void softmax_rows(const Real* in, int rows, int cols, Real* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int r = 0; r < rows; ++r) {
    const Real* x = in + static_cast<size_t>(r) * cols;
    Real* y = out + static_cast<size_t>(r) * cols;
    Real mx = x[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    Real sum = 0;
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (int c = 0; c < cols; ++c) y[c] /= sum;
  }
}

inline void lse_rows(const double* logk, int n, int m, const double* logv,
                     double* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) {
    const double* row = logk + static_cast<size_t>(i) * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, row[j] + logv[j]);
    double acc = 0;
    for (int j = 0; j < m; ++j) acc += std::exp(row[j] + logv[j] - mx);
    out[i] = mx + std::log(acc);
  }
}

inline void lse_cols(const double* logk, int n, int m, const double* logu,
                     double* out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int j = 0; j < m; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      mx = std::max(mx, logk[static_cast<size_t>(i) * m + j] + logu[i]);
    double acc = 0;
    for (int i = 0; i < n; ++i)
      acc += std::exp(logk[static_cast<size_t>(i) * m + j] + logu[i] - mx);
    out[j] = mx + std::log(acc);
  }
}

template <class Real>
void conv1d_forward(const Real* x, int batch, int cin, int t, const Real* w,
                    const Real* bias, int cout, int k, int pad, Real* y) {
  const int tout = t + 2 * pad - k + 1;
  const int lo = std::min(pad, tout);
  const int hi = std::max(lo, std::min(tout, t - k + 1 + pad));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < cout; ++o) {
      Real* yrow = y + (static_cast<size_t>(b) * cout + o) * tout;
      for (int p = 0; p < tout; ++p) yrow[p] = bias[o];
      for (int c = 0; c < cin; ++c) {
        const Real* xrow = x + (static_cast<size_t>(b) * cin + c) * t;
        const Real* wrow = w + (static_cast<size_t>(o) * cin + c) * k;
        for (int p = 0; p < lo; ++p) {
          Real acc = 0;
          for (int j = 0; j < k; ++j) {
            const int src = p - pad + j;
            if (src >= 0 && src < t) acc += wrow[j] * xrow[src];
          }
          yrow[p] += acc;
        }
        for (int p = lo; p < hi; ++p) {
          Real acc = 0;
          const Real* base = xrow + p - pad;
          for (int j = 0; j < k; ++j) acc += wrow[j] * base[j];
          yrow[p] += acc;
        }
        for (int p = hi; p < tout; ++p) {
          Real acc = 0;
          for (int j = 0; j < k; ++j) {
            const int src = p - pad + j;
            if (src >= 0 && src < t) acc += wrow[j] * xrow[src];
          }
          yrow[p] += acc;
        }
      }
    }
  }
}

template <class Real>
void conv1d_backward_data(const Real* gy, int batch, int cout, int tout,
                          const Real* w, int cin, int k, int pad, int t,
                          Real* gx) {
  std::fill(gx, gx + static_cast<size_t>(batch) * cin * t, Real(0));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < cin; ++c) {
      Real* gxrow = gx + (static_cast<size_t>(b) * cin + c) * t;
      for (int o = 0; o < cout; ++o) {
        const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
        const Real* wrow = w + (static_cast<size_t>(o) * cin + c) * k;
        for (int p = 0; p < tout; ++p) {
          const int j0 = std::max(0, pad - p);
          const int j1 = std::min(k, t + pad - p);
          const Real g = gyrow[p];
          Real* dst = gxrow + p - pad;
          for (int j = j0; j < j1; ++j) dst[j] += wrow[j] * g;
        }
      }
    }
  }
}

// Parallel over output channels: each weight slot is accumulated by a single
// thread in batch order, matching the serial reference bit for bit.
template <class Real>
void conv1d_backward_weights(const Real* x, int batch, int cin, int t,
                             const Real* gy, int cout, int tout, int k,
                             int pad, Real* gw, Real* gb) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int o = 0; o < cout; ++o) {
    Real bacc = 0;
    for (int b = 0; b < batch; ++b) {
      const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
      for (int p = 0; p < tout; ++p) bacc += gyrow[p];
    }
    gb[o] += bacc;
    for (int c = 0; c < cin; ++c) {
      Real* gwrow = gw + (static_cast<size_t>(o) * cin + c) * k;
      for (int j = 0; j < k; ++j) {
        const int p0 = std::max(0, pad - j);
        const int p1 = std::min(tout, t + pad - j);
        Real acc = 0;
        for (int b = 0; b < batch; ++b) {
          const Real* xrow = x + (static_cast<size_t>(b) * cin + c) * t + j - pad;
          const Real* gyrow = gy + (static_cast<size_t>(b) * cout + o) * tout;
          for (int p = p0; p < p1; ++p) acc += xrow[p] * gyrow[p];
        }
        gwrow[j] += acc;
      }
    }
  }
}

template <class Real>
void assign_nearest(const Real* pts, int n, const Real* cen, int L, int d,
                    int* assign, Real* dist) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) {
    const Real* p = pts + static_cast<size_t>(i) * d;
    int best = 0;
    Real bestd = std::numeric_limits<Real>::max();
    for (int l = 0; l < L; ++l) {
      const Real* c = cen + static_cast<size_t>(l) * d;
      Real acc = 0;
      for (int k = 0; k < d; ++k) {
        const Real diff = p[k] - c[k];
        acc += diff * diff;
      }
      if (acc < bestd) {
        bestd = acc;
        best = l;
      }
    }
    assign[i] = best;
    if (dist) dist[i] = bestd;
  }
}

inline int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace unijdot::kernels
