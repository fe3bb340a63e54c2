#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "srnn/util.hpp"

namespace srnn::ad {

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

/// Dense row-major array of 64-bit floats. Rank 1 = vector, rank 2 = matrix;
/// scalars are stored as shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) fail("tensor data length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor zeros(std::vector<std::size_t> s) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(std::vector<std::size_t> s, double v) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double scalar_value() const {
    if (size() != 1) fail("scalar_value on non-scalar tensor");
    return data[0];
  }

  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

}  // namespace srnn::ad
