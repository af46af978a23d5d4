#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ponbranch/nn/tensor.hpp"

// Reverse-mode differentiation over a linear tape of matrix operations.
//
// Every op appends one node holding its forward value and a backward rule
// that adds the node's gradient into its inputs' gradients. Backward walks
// the tape in exact reverse order. Parameter leaves forward their gradient
// into the bound Tensor::grad when backward finishes.

namespace ponbranch::nn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var constant(Tensor t) { return push(std::move(t), nullptr, nullptr); }

  /// Leaf bound to a parameter; its gradient is summed into p.grad.
  Var parameter(Tensor& p) {
    Tensor copy(p.shape, p.values);
    return push(std::move(copy), nullptr, &p);
  }

  Var record(Tensor value, Backward backward) { return push(std::move(value), std::move(backward), nullptr); }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id); }

  /// Gradient slot of a node; valid while backward runs and afterwards.
  std::vector<double>& grad(std::size_t id) { return nodes_[id].grad; }
  const std::vector<double>& grad(Var v) const { return nodes_.at(v.id).grad; }

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  void backward(Var loss) {
    if (loss.tape != this) throw std::logic_error("backward: variable from another tape");
    if (backward_done_) throw std::logic_error("backward called twice without reset");
    if (value(loss).size() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_string(value(loss).shape));
    for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward) n.backward(*this);
    }
    for (auto& n : nodes_) {
      if (!n.param) continue;
      if (n.param->grad.size() != n.param->values.size()) n.param->grad.assign(n.param->values.size(), 0.0);
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
    backward_done_ = true;
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    Tensor* param = nullptr;
  };

  Var push(Tensor value, Backward backward, Tensor* param) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), param});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMatrix>;
using CMapM = Eigen::Map<const RowMatrix>;

inline CMapM cmat(const Tensor& t) {
  return CMapM(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline CMapM cmat(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return CMapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MapM mat(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::logic_error(std::string(op) + ": variables from different tapes");
}

[[noreturn]] inline void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Elementwise unary op with derivative expressed through the output y.
template <class F, class DF>
Var unary(Var a, F f, DF dfdy_from_xy) {
  const Tensor& x = a.value();
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.values[i] = f(x.values[i]);
  const std::size_t ia = a.id;
  Tape* t = a.tape;
  const std::size_t self = t->size();
  return t->record(std::move(y), [ia, self, dfdy_from_xy](Tape& tp) {
    const auto& g = tp.grad(self);
    const auto& xs = tp.value(ia).values;
    const auto& ys = tp.value(self).values;
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdy_from_xy(xs[i], ys[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitive ops

/// [m,k] x [k,n] -> [m,n]
inline Var matmul(Var a, Var b) {
  detail::same_tape("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) detail::shape_fail("matmul", A.shape, B.shape);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  detail::mat(C.values, m, n).noalias() = detail::cmat(A) * detail::cmat(B);
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id, ib = b.id;
  return t->record(std::move(C), [=](Tape& tp) {
    const auto G = detail::cmat(tp.grad(self), m, n);
    detail::mat(tp.grad(ia), m, k).noalias() += G * detail::cmat(tp.value(ib)).transpose();
    detail::mat(tp.grad(ib), k, n).noalias() += detail::cmat(tp.value(ia)).transpose() * G;
  });
}

namespace detail {

template <class F, class GA, class GB>
Var binary_same_shape(const char* op, Var a, Var b, F f, GA ga_rule, GB gb_rule) {
  same_tape(op, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape != B.shape) shape_fail(op, A.shape, B.shape);
  Tensor y(A.shape);
  for (std::size_t i = 0; i < A.size(); ++i) y.values[i] = f(A.values[i], B.values[i]);
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id, ib = b.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    const auto& av = tp.value(ia).values;
    const auto& bv = tp.value(ib).values;
    auto& gA = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i] * ga_rule(av[i], bv[i]);
    auto& gB = tp.grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) gB[i] += g[i] * gb_rule(av[i], bv[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

/// [m,n] + bias[n] broadcast over rows.
inline Var add_bias(Var a, Var bias) {
  detail::same_tape("add_bias", a, bias);
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  if (b.size() != A.cols()) detail::shape_fail("add_bias", A.shape, b.shape);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y(A.shape, A.values);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y.values[r * n + c] += b.values[c];
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id, ib = bias.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gA = tp.grad(ia);
    auto& gB = tp.grad(ib);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        gA[r * n + c] += g[r * n + c];
        gB[c] += g[r * n + c];
      }
  });
}

/// [m,n] scaled row-wise by s[m,1].
inline Var mul_col(Var a, Var s) {
  detail::same_tape("mul_col", a, s);
  const Tensor& A = a.value();
  const Tensor& S = s.value();
  if (S.size() != A.rows()) detail::shape_fail("mul_col", A.shape, S.shape);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y(A.shape);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y.values[r * n + c] = A.values[r * n + c] * S.values[r];
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id, is = s.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    const auto& av = tp.value(ia).values;
    const auto& sv = tp.value(is).values;
    auto& gA = tp.grad(ia);
    auto& gS = tp.grad(is);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        gA[r * n + c] += g[r * n + c] * sv[r];
        gS[r] += g[r * n + c] * av[r * n + c];
      }
  });
}

inline Var scale(Var a, double k) {
  return detail::unary(a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

inline Var sigmoid(Var a) {
  return detail::unary(a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// Concatenate matrices with equal row counts along columns.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    detail::same_tape("concat_cols", parts[0], p);
    if (p.rows() != m) detail::shape_fail("concat_cols", parts[0].shape(), p.shape());
    ids.push_back(p.id);
    widths.push_back(p.cols());
    n += p.cols();
  }
  Tensor y = Tensor::matrix(m, n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value().values;
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  y.values.begin() + static_cast<std::ptrdiff_t>(r * n + off));
    off += widths[k];
  }
  Tape* t = parts[0].tape;
  const std::size_t self = t->size();
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto& gk = tp.grad(ids[k]);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * n + o + c];
      o += widths[k];
    }
  });
}

/// Stack matrices with equal column counts along rows.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids, sizes;
  for (const auto& p : parts) {
    detail::same_tape("concat_rows", parts[0], p);
    if (p.cols() != n) detail::shape_fail("concat_rows", parts[0].shape(), p.shape());
    ids.push_back(p.id);
    sizes.push_back(p.value().size());
    m += p.rows();
  }
  Tensor y = Tensor::matrix(m, n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value().values;
    std::copy(v.begin(), v.end(), y.values.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  Tape* t = parts[0].tape;
  const std::size_t self = t->size();
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto& gk = tp.grad(ids[k]);
      for (std::size_t i = 0; i < sizes[k]; ++i) gk[i] += g[o + i];
      o += sizes[k];
    }
  });
}

/// Columns [begin, begin + count) of a matrix.
inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  if (begin + count > n || count == 0)
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + shape_string(A.shape));
  Tensor y = Tensor::matrix(m, count);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < count; ++c) y.values[r * count + c] = A.values[r * n + begin + c];
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gA = tp.grad(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) gA[r * n + begin + c] += g[r * count + c];
  });
}

inline Var reshape(Var a, Shape shape) {
  const Tensor& A = a.value();
  if (element_count(shape) != A.size()) detail::shape_fail("reshape", A.shape, shape);
  Tensor y(std::move(shape), A.values);
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gA = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i];
  });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y = Tensor::matrix(n, m);
  detail::mat(y.values, n, m) = detail::cmat(A).transpose();
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(std::move(y), [=](Tape& tp) {
    detail::mat(tp.grad(ia), m, n) += detail::cmat(tp.grad(self), n, m).transpose();
  });
}

/// Column sums: [m,n] -> [1,n]
inline Var sum_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y = Tensor::matrix(1, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y.values[c] += A.values[r * n + c];
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gA = tp.grad(ia);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) gA[r * n + c] += g[c];
  });
}

inline Var sum_all(Var a) {
  const Tensor& A = a.value();
  double s = 0;
  for (double v : A.values) s += v;
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(Tensor::scalar(s), [=](Tape& tp) {
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad(ia)) v += g;
  });
}

/// Row-wise softmax, max-subtracted.
inline Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y(A.shape);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = &A.values[r * n];
    const double mx = *std::max_element(x, x + n);
    double z = 0;
    for (std::size_t c = 0; c < n; ++c) z += (y.values[r * n + c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) y.values[r * n + c] /= z;
  }
  Tape* t = a.tape;
  const std::size_t self = t->size(), ia = a.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    const auto& s = tp.value(self).values;
    auto& gA = tp.grad(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * s[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gA[r * n + c] += s[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// losses

/// Sum over rows of -log softmax(logits)[label].
inline Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& L = logits.value();
  const std::size_t m = L.rows(), k = L.cols();
  if (labels.size() != m)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_string(L.shape));
  std::vector<double> probs(m * k);
  double loss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
      throw ValidationError("softmax_cross_entropy: class target out of range: " + std::to_string(labels[r]));
    const double* x = &L.values[r * k];
    const double mx = *std::max_element(x, x + k);
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] = std::exp(x[c] - lse);
    loss += lse - x[labels[r]];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  Tape* t = logits.tape;
  const std::size_t self = t->size(), il = logits.id;
  return t->record(Tensor::scalar(loss), [=, probs = std::move(probs), lab = std::move(lab)](Tape& tp) {
    const double g = tp.grad(self)[0];
    auto& gL = tp.grad(il);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c)
        gL[r * k + c] += g * (probs[r * k + c] - (static_cast<int>(c) == lab[r] ? 1.0 : 0.0));
  });
}

/// Sum over rows of the mean squared error across that row's present slots.
/// Rows without a present slot contribute zero.
inline Var masked_mse(Var pred, const Tensor& target, const Tensor& mask) {
  const Tensor& P = pred.value();
  if (target.shape != P.shape || mask.shape != P.shape) detail::shape_fail("masked_mse", P.shape, target.shape);
  const std::size_t m = P.rows(), k = P.cols();
  std::vector<double> weight(m, 0.0);
  double loss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    double present = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double mk = mask.values[r * k + c];
      if (mk != 0.0 && mk != 1.0) throw ValidationError("masked_mse: mask must be 0 or 1");
      if (mk == 1.0) {
        const double tv = target.values[r * k + c];
        if (!(tv >= 0.0 && tv <= 1.0)) throw ValidationError("masked_mse: position target outside [0,1]");
      }
      present += mk;
    }
    if (present == 0) continue;
    weight[r] = 1.0 / present;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = P.values[r * k + c] - target.values[r * k + c];
      loss += weight[r] * mask.values[r * k + c] * d * d;
    }
  }
  Tape* t = pred.tape;
  const std::size_t self = t->size(), ip = pred.id;
  return t->record(Tensor::scalar(loss), [=, weight = std::move(weight), tv = target.values,
                                          mv = mask.values](Tape& tp) {
    const double g = tp.grad(self)[0];
    const auto& pv = tp.value(ip).values;
    auto& gP = tp.grad(ip);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c)
        gP[r * k + c] += g * weight[r] * mv[r * k + c] * 2.0 * (pv[r * k + c] - tv[r * k + c]);
  });
}

// ---------------------------------------------------------------------------
// sequence helpers

/// Zero-padded 'same' patches for 1-D convolution.
/// x: [batch*length, channels] (rows batch-major) -> [batch*length, kernel*channels],
/// column index = tap * channels + channel.
inline Var im2col(Var x, std::size_t batch, std::size_t length, std::size_t kernel) {
  const Tensor& X = x.value();
  if (X.rows() != batch * length || kernel % 2 == 0)
    throw ShapeError("im2col: " + shape_string(X.shape) + " is not batch*length rows or kernel is even");
  const std::size_t ch = X.cols(), width = kernel * ch;
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  Tensor y = Tensor::matrix(batch * length, width);
  auto src_row = [=](std::size_t b, std::size_t l, std::size_t tap) -> std::ptrdiff_t {
    const auto pos = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(tap) - half;
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) return -1;
    return static_cast<std::ptrdiff_t>(b * length) + pos;
  };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < length; ++l)
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const auto s = src_row(b, l, tap);
        if (s < 0) continue;
        for (std::size_t c = 0; c < ch; ++c)
          y.values[(b * length + l) * width + tap * ch + c] = X.values[static_cast<std::size_t>(s) * ch + c];
      }
  Tape* t = x.tape;
  const std::size_t self = t->size(), ix = x.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gX = tp.grad(ix);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t l = 0; l < length; ++l)
        for (std::size_t tap = 0; tap < kernel; ++tap) {
          const auto s = src_row(b, l, tap);
          if (s < 0) continue;
          for (std::size_t c = 0; c < ch; ++c)
            gX[static_cast<std::size_t>(s) * ch + c] += g[(b * length + l) * width + tap * ch + c];
        }
  });
}

/// Mean over each run of `length` consecutive rows: [batch*length, c] -> [batch, c].
inline Var segment_mean(Var x, std::size_t batch, std::size_t length) {
  const Tensor& X = x.value();
  if (X.rows() != batch * length) throw ShapeError("segment_mean: " + shape_string(X.shape) + " is not batch*length rows");
  const std::size_t c = X.cols();
  const double inv = 1.0 / static_cast<double>(length);
  Tensor y = Tensor::matrix(batch, c);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < length; ++l)
      for (std::size_t j = 0; j < c; ++j) y.values[b * c + j] += inv * X.values[(b * length + l) * c + j];
  Tape* t = x.tape;
  const std::size_t self = t->size(), ix = x.id;
  return t->record(std::move(y), [=](Tape& tp) {
    const auto& g = tp.grad(self);
    auto& gX = tp.grad(ix);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t l = 0; l < length; ++l)
        for (std::size_t j = 0; j < c; ++j) gX[(b * length + l) * c + j] += inv * g[b * c + j];
  });
}

}  // namespace ponbranch::nn
