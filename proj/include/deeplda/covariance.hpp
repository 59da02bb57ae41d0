#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"

namespace deeplda {

/// Shared-covariance parameterization of the LDA head. All variants are
/// log-parameterized on the scale entries, so Sigma is symmetric positive
/// definite by construction for any finite raw values and the optimizer can
/// run unconstrained.
///
/// Raw layouts:
///   Spherical     raw = [log sigma]
///   Diagonal      raw = [log sigma_1, ..., log sigma_d]
///   FullCholesky  raw = lower triangle of L packed row-major, with the
///                 diagonal stored as log(l_ii)
class CovarianceParam {
 public:
  enum class Variant { Spherical, Diagonal, FullCholesky };

  CovarianceParam() = default;

  static CovarianceParam spherical(int dim, double sigma = 1.0) {
    CovarianceParam c;
    c.variant_ = Variant::Spherical;
    c.dim_ = dim;
    c.raw_ = {std::log(sigma)};
    return c;
  }

  static CovarianceParam diagonal(int dim, const Vec& sigmas) {
    if (static_cast<int>(sigmas.size()) != dim)
      throw DimensionMismatch("diagonal covariance: need one sigma per dimension");
    CovarianceParam c;
    c.variant_ = Variant::Diagonal;
    c.dim_ = dim;
    c.raw_.resize(dim);
    for (int i = 0; i < dim; ++i) c.raw_[i] = std::log(sigmas[i]);
    return c;
  }

  static CovarianceParam diagonal_identity(int dim) {
    return diagonal(dim, Vec(dim, 1.0));
  }

  static CovarianceParam full_identity(int dim) {
    CovarianceParam c;
    c.variant_ = Variant::FullCholesky;
    c.dim_ = dim;
    c.raw_.assign(static_cast<size_t>(dim) * (dim + 1) / 2, 0.0);
    return c;
  }

  /// Factor an explicit SPD matrix (throws NotPositiveDefinite if it is not).
  static CovarianceParam from_sigma(const Matrix& sigma) {
    const Matrix l = cholesky(sigma);
    CovarianceParam c;
    c.variant_ = Variant::FullCholesky;
    c.dim_ = sigma.rows();
    c.raw_.resize(static_cast<size_t>(c.dim_) * (c.dim_ + 1) / 2);
    for (int i = 0; i < c.dim_; ++i)
      for (int j = 0; j <= i; ++j)
        c.raw_[tri_index(i, j)] = (i == j) ? std::log(l(i, i)) : l(i, j);
    return c;
  }

  Variant variant() const { return variant_; }
  int dim() const { return dim_; }
  Vec& raw() { return raw_; }
  const Vec& raw() const { return raw_; }
  int num_params() const { return static_cast<int>(raw_.size()); }

  static size_t tri_index(int i, int j) {
    return static_cast<size_t>(i) * (i + 1) / 2 + j;
  }

  double log_det() const {
    switch (variant_) {
      case Variant::Spherical:
        return 2.0 * dim_ * raw_[0];
      case Variant::Diagonal: {
        double s = 0.0;
        for (double v : raw_) s += v;
        return 2.0 * s;
      }
      case Variant::FullCholesky: {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) s += raw_[tri_index(i, i)];
        return 2.0 * s;
      }
    }
    return 0.0;
  }

  double det() const { return std::exp(log_det()); }

  /// Materialize the Cholesky factor L with Sigma = L L^T.
  Matrix chol_factor() const {
    Matrix l(dim_, dim_);
    switch (variant_) {
      case Variant::Spherical: {
        const double s = std::exp(raw_[0]);
        for (int i = 0; i < dim_; ++i) l(i, i) = s;
        break;
      }
      case Variant::Diagonal:
        for (int i = 0; i < dim_; ++i) l(i, i) = std::exp(raw_[i]);
        break;
      case Variant::FullCholesky:
        for (int i = 0; i < dim_; ++i)
          for (int j = 0; j <= i; ++j)
            l(i, j) = (i == j) ? std::exp(raw_[tri_index(i, i)]) : raw_[tri_index(i, j)];
        break;
    }
    return l;
  }

  Matrix sigma_matrix() const {
    const Matrix l = chol_factor();
    Matrix s(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) {
        double v = 0.0;
        for (int k = 0; k <= std::min(i, j); ++k) v += l(i, k) * l(j, k);
        s(i, j) = v;
      }
    return s;
  }

  /// w = L^{-1} diff, so that |w|^2 is the squared Mahalanobis distance.
  Vec whiten(const Vec& diff) const {
    check_dim(diff);
    switch (variant_) {
      case Variant::Spherical: {
        const double inv = std::exp(-raw_[0]);
        Vec w(diff);
        for (double& x : w) x *= inv;
        return w;
      }
      case Variant::Diagonal: {
        Vec w(dim_);
        for (int i = 0; i < dim_; ++i) w[i] = diff[i] * std::exp(-raw_[i]);
        return w;
      }
      case Variant::FullCholesky:
        return solve_lower(chol_factor(), diff);
    }
    return {};
  }

  /// u = Sigma^{-1} diff via two triangular solves (never an explicit inverse).
  Vec sigma_inv_times(const Vec& diff) const {
    check_dim(diff);
    switch (variant_) {
      case Variant::Spherical: {
        const double inv = std::exp(-2.0 * raw_[0]);
        Vec u(diff);
        for (double& x : u) x *= inv;
        return u;
      }
      case Variant::Diagonal: {
        Vec u(dim_);
        for (int i = 0; i < dim_; ++i) u[i] = diff[i] * std::exp(-2.0 * raw_[i]);
        return u;
      }
      case Variant::FullCholesky: {
        const Matrix l = chol_factor();
        return solve_lower_transposed(l, solve_lower(l, diff));
      }
    }
    return {};
  }

  double mahalanobis_sq(const Vec& diff) const { return norm_sq(whiten(diff)); }

  /// sigma when spherical; meaningless for other variants.
  double spherical_sigma() const { return std::exp(raw_[0]); }

  std::string variant_name() const {
    switch (variant_) {
      case Variant::Spherical: return "spherical";
      case Variant::Diagonal: return "diagonal";
      case Variant::FullCholesky: return "full_cholesky";
    }
    return "";
  }

  static Variant variant_from_name(const std::string& name) {
    if (name == "spherical") return Variant::Spherical;
    if (name == "diagonal") return Variant::Diagonal;
    if (name == "full_cholesky") return Variant::FullCholesky;
    throw std::invalid_argument("unknown covariance variant: " + name);
  }

  static CovarianceParam from_raw(Variant variant, int dim, Vec raw) {
    CovarianceParam c;
    c.variant_ = variant;
    c.dim_ = dim;
    size_t expected = 0;
    switch (variant) {
      case Variant::Spherical: expected = 1; break;
      case Variant::Diagonal: expected = static_cast<size_t>(dim); break;
      case Variant::FullCholesky: expected = static_cast<size_t>(dim) * (dim + 1) / 2; break;
    }
    if (raw.size() != expected)
      throw ShapeMismatch("covariance raw parameter count does not match variant");
    c.raw_ = std::move(raw);
    return c;
  }

 private:
  void check_dim(const Vec& v) const {
    if (static_cast<int>(v.size()) != dim_)
      throw DimensionMismatch("covariance: vector length does not match dimension");
  }

  Variant variant_ = Variant::Spherical;
  int dim_ = 0;
  Vec raw_{0.0};
};

/// Squared Mahalanobis distance (x-mu)^T Sigma^{-1} (x-mu), >= 0.
inline double mahalanobis_sq(const Vec& x, const Vec& mu, const CovarianceParam& cov) {
  if (x.size() != mu.size())
    throw DimensionMismatch("mahalanobis_sq: x and mu differ in length");
  return cov.mahalanobis_sq(sub(x, mu));
}

/// log N(x; mu, Sigma) = -(d/2) log(2 pi) - 1/2 log det Sigma - 1/2 m^2.
inline double gaussian_log_pdf(const Vec& x, const Vec& mu, const CovarianceParam& cov) {
  if (x.size() != mu.size())
    throw DimensionMismatch("gaussian_log_pdf: x and mu differ in length");
  return -0.5 * cov.dim() * kLog2Pi - 0.5 * cov.log_det() - 0.5 * cov.mahalanobis_sq(sub(x, mu));
}

}  // namespace deeplda
