#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ponbranch/common.hpp"

namespace ponbranch::nn {

using Shape = std::vector<std::size_t>;

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t element_count(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of doubles with an optional gradient slot.
/// Rank 0 and rank 1 tensors are viewed as a single row where a matrix is
/// expected.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), values(element_count(shape), fill) {}
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (element_count(shape) != values.size())
      throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) { return Tensor({r, c}, fill); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    return 1;
  }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad.assign(values.size(), 0.0); }

  bool operator==(const Tensor& o) const { return shape == o.shape && values == o.values; }
};

}  // namespace ponbranch::nn
