#include "pmcphd/gaussian.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

struct CholeskyAttempt {
  std::optional<Matrix> lower;
  double most_negative_pivot = 0.0;
};

// Semidefinite-tolerant Cholesky: a pivot within tol of zero is accepted when
// the rest of its column also vanishes.
CholeskyAttempt try_cholesky(const Matrix& a) {
  const Eigen::Index n = a.rows();
  const double scale = n > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-14 * scale;
  Matrix l = Matrix::Zero(n, n);
  CholeskyAttempt out;
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
    if (pivot > tol) {
      const double d = std::sqrt(pivot);
      l(j, j) = d;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
      }
      continue;
    }
    if (pivot < -tol) {
      out.most_negative_pivot = std::min(out.most_negative_pivot, pivot);
      return out;
    }
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double r = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
      if (std::abs(r) > std::sqrt(tol * scale) + tol) {
        out.most_negative_pivot = std::min(out.most_negative_pivot, -std::abs(r));
        return out;
      }
    }
  }
  out.lower = std::move(l);
  return out;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

bool PsdFactor::strictly_positive() const {
  return lower.rows() == 0 || lower.diagonal().minCoeff() > 0.0;
}

PsdFactor psd_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("psd_factor: matrix is not square");
  if (!cov.allFinite()) throw NotPsdError("psd_factor: non-finite entries", std::numeric_limits<double>::quiet_NaN());
  const Eigen::Index d = cov.rows();
  const double base = d > 0 ? cov.trace() / static_cast<double>(d) : 0.0;
  constexpr std::array<double, 4> kLadder{0.0, 1e-12, 1e-10, 1e-8};
  double worst = 0.0;
  for (double level : kLadder) {
    const double eps = level * std::abs(base);
    if (level > 0.0 && eps == 0.0) break;
    Matrix shifted = cov;
    shifted.diagonal().array() += eps;
    CholeskyAttempt attempt = try_cholesky(shifted);
    if (attempt.lower) return PsdFactor{std::move(*attempt.lower), eps};
    worst = std::min(worst, attempt.most_negative_pivot);
  }
  throw NotPsdError("psd_factor: matrix is not positive semidefinite (most negative pivot " +
                        std::to_string(worst) + ")",
                    worst);
}

GaussianDensity::GaussianDensity(const Matrix& cov) {
  try {
    factor_ = psd_factor(cov);
  } catch (const NotPsdError& e) {
    throw SingularCovarianceError(e.what());
  }
  if (!factor_.strictly_positive()) {
    throw SingularCovarianceError("covariance is singular");
  }
  const double log_det = 2.0 * factor_.lower.diagonal().array().log().sum();
  log_normalizer_ = -0.5 * (static_cast<double>(cov.rows()) * kLog2Pi + log_det);
}

double GaussianDensity::log_density(const Vector& residual) const {
  if (residual.size() != dim()) throw DimensionError("log_density: dimension mismatch");
  const Vector u = factor_.lower.triangularView<Eigen::Lower>().solve(residual);
  return log_normalizer_ - 0.5 * u.squaredNorm();
}

Vector GaussianDensity::log_density_columns(const Matrix& residuals) const {
  if (residuals.rows() != dim()) throw DimensionError("log_density_columns: dimension mismatch");
  const Matrix u = factor_.lower.triangularView<Eigen::Lower>().solve(residuals);
  return (log_normalizer_ - 0.5 * u.colwise().squaredNorm().array()).matrix().transpose();
}

double mvn_logpdf(const Vector& x, const Gaussian& g) {
  if (x.size() != g.mean.size() || g.cov.rows() != g.mean.size() || g.cov.cols() != g.mean.size()) {
    throw DimensionError("mvn_logpdf: dimension mismatch");
  }
  return GaussianDensity(g.cov).log_density(x - g.mean);
}

Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, RandomStream& rng) {
  Matrix u(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) u(r, c) = rng.normal();
  }
  return u;
}

Vector mvn_sample(const Gaussian& g, RandomStream& rng) {
  if (g.cov.rows() != g.mean.size() || g.cov.cols() != g.mean.size()) {
    throw DimensionError("mvn_sample: dimension mismatch");
  }
  PsdFactor f;
  try {
    f = psd_factor(g.cov);
  } catch (const NotPsdError& e) {
    throw SingularCovarianceError(e.what());
  }
  const Vector u = standard_normal_matrix(g.dim(), 1, rng).col(0);
  return g.mean + f.lower * u;
}

double symmetry_residual(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("symmetry_residual: matrix is not square");
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

double min_eigenvalue(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("min_eigenvalue: matrix is not square");
  if (a.size() == 0) return 0.0;
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace pmcphd
