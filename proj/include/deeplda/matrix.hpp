#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "deeplda/errors.hpp"

namespace deeplda {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Small and value-semantic; everything
/// in this library is at most a few hundred rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  Vec data_;
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const Vec& a) { return dot(a, a); }

inline Vec sub(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// y = M x
inline Vec matvec(const Matrix& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols())
    throw DimensionMismatch("matvec: vector length does not match matrix columns");
  Vec y(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

/// y = M^T x
inline Vec matvec_transposed(const Matrix& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.rows())
    throw DimensionMismatch("matvec_transposed: vector length does not match matrix rows");
  Vec y(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) y[j] += m(i, j) * x[i];
  return y;
}

/// Cholesky factorization A = L L^T for a symmetric positive-definite A.
/// Throws NotPositiveDefinite when a leading minor is not positive; callers
/// in the training path catch this to report covariance degeneracy.
inline Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("cholesky: matrix must be square");
  const int n = a.rows();
  double max_abs = 0.0;
  for (double v : a.data()) max_abs = std::max(max_abs, std::abs(v));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * (1.0 + max_abs))
        throw DimensionMismatch("cholesky: matrix is not symmetric");

  Matrix l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) throw NotPositiveDefinite("cholesky: leading minor is not positive");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

/// log det(L L^T) = 2 * sum_i log l_ii for a Cholesky factor L.
inline double log_det_from_cholesky(const Matrix& l) {
  double s = 0.0;
  for (int i = 0; i < l.rows(); ++i) {
    if (l(i, i) <= 0.0) throw NonPositiveDiagonal("log_det_from_cholesky: diagonal entry <= 0");
    s += std::log(l(i, i));
  }
  return 2.0 * s;
}

/// Solve L y = b by forward substitution.
inline Vec solve_lower(const Matrix& l, const Vec& b) {
  if (static_cast<int>(b.size()) != l.rows())
    throw DimensionMismatch("solve_lower: size mismatch");
  const int n = l.rows();
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int j = 0; j < i; ++j) s -= l(i, j) * y[j];
    y[i] = s / l(i, i);
  }
  return y;
}

/// Solve L^T y = b by back substitution.
inline Vec solve_lower_transposed(const Matrix& l, const Vec& b) {
  if (static_cast<int>(b.size()) != l.rows())
    throw DimensionMismatch("solve_lower_transposed: size mismatch");
  const int n = l.rows();
  Vec y(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= l(j, i) * y[j];
    y[i] = s / l(i, i);
  }
  return y;
}

inline double log_sum_exp(const Vec& v) {
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;  // all -inf, or an inf/nan dominates
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Numerically stable log-softmax (max subtraction); exp of the result sums
/// to 1 within 1e-12 for any finite input.
inline Vec log_softmax(const Vec& v) {
  const double lse = log_sum_exp(v);
  Vec r(v.size());
  for (size_t i = 0; i < v.size(); ++i) r[i] = v[i] - lse;
  return r;
}

inline Vec softmax(const Vec& v) {
  Vec r = log_softmax(v);
  for (double& x : r) x = std::exp(x);
  return r;
}

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

/// log N(diff; 0, L L^T) evaluated through the factor (no explicit inverse).
inline double gaussian_log_pdf_chol(const Vec& diff, const Matrix& chol_factor) {
  const int d = chol_factor.rows();
  if (static_cast<int>(diff.size()) != d)
    throw DimensionMismatch("gaussian_log_pdf_chol: size mismatch");
  const Vec w = solve_lower(chol_factor, diff);
  return -0.5 * d * kLog2Pi - 0.5 * log_det_from_cholesky(chol_factor) - 0.5 * norm_sq(w);
}

}  // namespace deeplda
