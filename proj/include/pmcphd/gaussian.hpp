#pragma once

#include <Eigen/Dense>

#include "pmcphd/random.hpp"

namespace pmcphd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Gaussian {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Lower factor L with L * L^T = cov + jitter * I.
struct PsdFactor {
  Matrix lower;
  double jitter = 0.0;

  bool strictly_positive() const;
};

/// Cholesky factorization with a jitter ladder of {0, 1e-12, 1e-10, 1e-8}
/// times trace(cov)/d. Zero pivots with a vanishing column are accepted, so
/// a positive semidefinite input (including the zero matrix) factors.
/// Throws NotPsdError when every level fails.
PsdFactor psd_factor(const Matrix& cov);

/// log N(x; g.mean, g.cov). Throws SingularCovarianceError if the covariance
/// is not strictly positive definite after jitter.
double mvn_logpdf(const Vector& x, const Gaussian& g);

/// g.mean + L * u with u i.i.d. standard normal drawn from rng in order.
Vector mvn_sample(const Gaussian& g, RandomStream& rng);

/// Fills a d x n matrix with i.i.d. standard normals, column by column.
Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, RandomStream& rng);

/// max |A - A^T| relative to max(1, max |A|).
double symmetry_residual(const Matrix& a);

/// Smallest eigenvalue of the symmetric part of a.
double min_eigenvalue(const Matrix& a);

/// Precomputed density for repeated evaluation against one covariance.
class GaussianDensity {
 public:
  explicit GaussianDensity(const Matrix& cov);

  /// Log-density of a zero-mean residual.
  double log_density(const Vector& residual) const;
  /// Log-density of every column of residuals.
  Vector log_density_columns(const Matrix& residuals) const;

  const PsdFactor& factor() const { return factor_; }
  double log_normalizer() const { return log_normalizer_; }
  Eigen::Index dim() const { return factor_.lower.rows(); }

 private:
  PsdFactor factor_;
  double log_normalizer_;
};

}  // namespace pmcphd
