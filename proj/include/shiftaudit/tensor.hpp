#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shiftaudit/error.hpp"

namespace shiftaudit {

/// Dense row-major array of doubles that carries its shape.
///
/// There is no broadcasting: binary operations require equal shapes, except the explicit
/// scalar variants.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(extent(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (extent(shape_) != data_.size()) {
      throw DimensionError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  std::span<double> row(std::size_t r) {
    const std::size_t c = cols();
    return std::span<double>(data_).subspan(r * c, c);
  }
  std::span<const double> row(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
  }

  /// Copy of row `r` of a matrix as a rank-1 tensor.
  Tensor row_tensor(std::size_t r) const {
    auto v = row(r);
    return Tensor({v.size()}, std::vector<double>(v.begin(), v.end()));
  }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  bool operator==(const Tensor&) const = default;

  static std::size_t extent(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw DimensionError("expected a rank-" + std::to_string(r) + " tensor, got shape " +
                           shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + Tensor::shape_string(a.shape()) +
                         " vs " + Tensor::shape_string(b.shape()));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// `y += alpha * x`
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + Tensor::shape_string(a.shape()) +
                         " and " + Tensor::shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto out = c.row(i);
    for (std::size_t p = 0; p < k; ++p) axpy(a(i, p), b.row(p), out);
  }
  return c;
}

/// `a · x` for a matrix `a` and a vector `x`.
inline Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size()) {
    throw DimensionError("matvec: incompatible shapes " + Tensor::shape_string(a.shape()) +
                         " and " + Tensor::shape_string(x.shape()));
  }
  Tensor y({a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x.values());
  return y;
}

/// `aᵀ · v` for a matrix `a` and a vector `v`.
inline Tensor matvec_transposed(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.rows() != v.size()) {
    throw DimensionError("matvec_transposed: incompatible shapes " +
                         Tensor::shape_string(a.shape()) + " and " +
                         Tensor::shape_string(v.shape()));
  }
  Tensor y({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (v[i] != 0.0) axpy(v[i], a.row(i), y.values());
  }
  return y;
}

template <class Op>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, Op op) {
  require_same_shape(a, b, name);
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = op(a[i], b[i]);
  return c;
}

template <class Op>
Tensor map_values(const Tensor& a, Op op) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = op(a[i]);
  return c;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double d : b.values()) {
    if (d == 0.0) throw ArgumentError("div: division by zero");
  }
  return zip(a, b, "div", [](double x, double y) { return x / y; });
}
inline Tensor scale(const Tensor& a, double s) {
  return map_values(a, [s](double x) { return x * s; });
}
inline Tensor add_scalar(const Tensor& a, double s) {
  return map_values(a, [s](double x) { return x + s; });
}

inline double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

inline double min(const Tensor& a) {
  if (a.empty()) throw ArgumentError("min of an empty tensor");
  return *std::min_element(a.values().begin(), a.values().end());
}

inline double max(const Tensor& a) {
  if (a.empty()) throw ArgumentError("max of an empty tensor");
  return *std::max_element(a.values().begin(), a.values().end());
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

/// L∞ distance between two equally shaped tensors.
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::size_t argmax(const Tensor& a) {
  if (a.empty()) throw ArgumentError("argmax of an empty tensor");
  return static_cast<std::size_t>(
      std::distance(a.values().begin(), std::max_element(a.values().begin(), a.values().end())));
}

inline bool all_finite(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace shiftaudit
