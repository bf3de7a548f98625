#pragma once

// Minimal dense vector/matrix helpers. Problem sizes in this library are tiny
// (a few hundred parameters at most), so plain std::vector storage is enough.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqsep {

using Vector = std::vector<double>;
using ConstVecView = std::span<const double>;
using VecView = std::span<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_same_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(what) + ": dimension mismatch (expected " +
                         std::to_string(expected) + ", got " + std::to_string(got) + ")");
  }
}

inline double dot(ConstVecView a, ConstVecView b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(ConstVecView a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(ConstVecView a, ConstVecView b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double norm_inf(ConstVecView a) {
  double m = 0.0;
  for (double v : a) m = std::fmax(m, std::fabs(v));
  return m;
}

// y += alpha * x
inline void axpy(double alpha, ConstVecView x, VecView y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(ConstVecView a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  VecView row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  ConstVecView row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void append_row(ConstVecView values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    require_same_dim(cols_, values.size(), "Matrix::append_row");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat() noexcept { return data_; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = M x
inline Vector matvec(const Matrix& m, ConstVecView x) {
  assert(m.cols() == x.size());
  Vector y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

// Determinant by partial-pivot Gaussian elimination; n is small.
inline double determinant(Matrix a) {
  const std::size_t n = a.rows();
  assert(n == a.cols());
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::fabs(a(r, k)) > std::fabs(a(piv, k))) piv = r;
    if (a(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
      det = -det;
    }
    det *= a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a(r, k) / a(k, k);
      for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
    }
  }
  return det;
}

}  // namespace eqsep
