#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "carcensus/util.hpp"

namespace carcensus {

// Dense row-major matrix, just large enough for the estimators.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }

  double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
  double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

  double* row(size_t i) { return data_.data() + i * cols_; }
  const double* row(size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// Solves A x = b for symmetric positive definite A by in-place Cholesky.
// Throws ValidationError when A is not positive definite (e.g. collinear
// columns in an unregularized normal system).
inline std::vector<double> cholesky_solve(Matrix a, std::vector<double> b) {
  const size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw ValidationError("cholesky_solve: dimension mismatch");

  for (size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (size_t k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
    if (!(diag > 0) || !std::isfinite(diag)) {
      throw ValidationError(
          "singular or indefinite system; with collinear features use a regularization "
          "strength lambda > 0");
    }
    const double root = std::sqrt(diag);
    a(j, j) = root;
    for (size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
      a(i, j) = v / root;
    }
  }

  // Forward substitution L z = b.
  for (size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (size_t k = 0; k < i; ++k) v -= a(i, k) * b[k];
    b[i] = v / a(i, i);
  }
  // Back substitution L^T x = z.
  for (size_t i = n; i-- > 0;) {
    double v = b[i];
    for (size_t k = i + 1; k < n; ++k) v -= a(k, i) * b[k];
    b[i] = v / a(i, i);
  }
  return b;
}

}  // namespace carcensus
