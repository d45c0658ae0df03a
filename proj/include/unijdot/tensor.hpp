#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace unijdot {

// Dense row-major numeric array with an explicit shape. Carries raw windows,
// feature vectors, logits and cost matrices throughout the library.
template <class Real>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<Real> data;

  TensorT() = default;
  TensorT(std::vector<int64_t> s, std::vector<Real> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel() != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static TensorT zeros(std::vector<int64_t> s) {
    TensorT t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(t.numel()), Real(0));
    return t;
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t dim(size_t i) const { return shape.at(i); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Checked construction: rejects NaN/Inf entries.
  static TensorT checked(std::vector<int64_t> s, std::vector<Real> d) {
    TensorT t(std::move(s), std::move(d));
    if (!t.all_finite())
      throw std::invalid_argument("tensor: non-finite entry");
    return t;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace unijdot
