#include "pmcphd/pmc_model.hpp"

#include <cmath>
#include <sstream>

#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-9;

Matrix observation_gain(const Matrix& pair_cov, Eigen::Index m, LikelihoodMode mode) {
  const Eigen::Index q = pair_cov.rows() - m;
  if (mode == LikelihoodMode::Predictive) return Matrix::Zero(q, m);
  const Matrix sxx = pair_cov.topLeftCorner(m, m);
  const Matrix syx = pair_cov.bottomLeftCorner(q, m);
  // Pseudo-inverse keeps the gain defined when Sigma11 is rank deficient.
  return syx * sxx.completeOrthogonalDecomposition().pseudoInverse();
}

Matrix observation_cov(const Matrix& pair_cov, Eigen::Index m, const Matrix& gain) {
  const Eigen::Index q = pair_cov.rows() - m;
  Matrix c = pair_cov.bottomRightCorner(q, q) - gain * pair_cov.bottomLeftCorner(q, m).transpose();
  return 0.5 * (c + c.transpose());
}

void require_pair_dims(const GaussianPmcModel& model, const PairState& s, const char* what) {
  if (s.x.size() != model.state_dim() || s.y.size() != model.obs_dim()) {
    throw DimensionError(std::string(what) + ": pair dimensions do not match the model");
  }
}

}  // namespace

Vector PairState::stacked() const {
  Vector xi(x.size() + y.size());
  xi << x, y;
  return xi;
}

PairState PairState::from_stacked(const Vector& xi, Eigen::Index state_dim) {
  return PairState{xi.head(state_dim), xi.tail(xi.size() - state_dim)};
}

void HmcSpec::check_dimensions() const {
  const Eigen::Index m = F.rows();
  const Eigen::Index q = H.rows();
  auto expect = [](const Matrix& a, Eigen::Index r, Eigen::Index c, const char* name) {
    if (a.rows() != r || a.cols() != c) {
      std::ostringstream os;
      os << "HmcSpec: " << name << " must be " << r << "x" << c << ", got " << a.rows() << "x" << a.cols();
      throw DimensionError(os.str());
    }
  };
  if (m == 0 || q == 0) throw DimensionError("HmcSpec: empty F or H");
  expect(F, m, m, "F");
  expect(Q, m, m, "Q");
  expect(H, q, m, "H");
  expect(R, q, q, "R");
  expect(P0, m, m, "P0");
  expect(F2, m, q, "F2");
  expect(H2, q, q, "H2");
  if (m0.size() != m) throw DimensionError("HmcSpec: m0 has wrong length");
}

bool HmcSpec::operator==(const HmcSpec& o) const {
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(F, o.F) && same(Q, o.Q) && same(H, o.H) && same(R, o.R) && m0.size() == o.m0.size() &&
         m0 == o.m0 && same(P0, o.P0) && same(F2, o.F2) && same(H2, o.H2);
}

LikelihoodKernel::LikelihoodKernel(const Matrix& pair_cov, Eigen::Index state_dim, LikelihoodMode mode)
    : gain_(observation_gain(pair_cov, state_dim, mode)),
      density_(observation_cov(pair_cov, state_dim, gain_)) {}

GaussianPmcModel::GaussianPmcModel(Matrix transition, Matrix noise_cov, Gaussian init, Eigen::Index state_dim)
    : transition_(std::move(transition)),
      noise_cov_(std::move(noise_cov)),
      init_(std::move(init)),
      state_dim_(state_dim) {
  const Eigen::Index n = transition_.rows();
  if (transition_.cols() != n || noise_cov_.rows() != n || noise_cov_.cols() != n) {
    throw DimensionError("GaussianPmcModel: B and Sigma must be square and of equal size");
  }
  if (state_dim_ <= 0 || state_dim_ >= n) throw DimensionError("GaussianPmcModel: bad state dimension");
  if (init_.mean.size() != n || init_.cov.rows() != n || init_.cov.cols() != n) {
    throw DimensionError("GaussianPmcModel: initial pair law has wrong dimension");
  }
  try {
    noise_factor_ = psd_factor(noise_cov_);
  } catch (const Error& e) {
    noise_error_ = e.what();
  }
  try {
    noise_density_.emplace(noise_cov_);
  } catch (const Error& e) {
    if (noise_error_.empty()) noise_error_ = e.what();
  }
  try {
    predictive_.emplace(noise_cov_, state_dim_, LikelihoodMode::Predictive);
  } catch (const Error& e) {
    predictive_error_ = e.what();
  }
  try {
    conditional_.emplace(noise_cov_, state_dim_, LikelihoodMode::Conditional);
  } catch (const Error& e) {
    conditional_error_ = e.what();
  }
}

const PsdFactor& GaussianPmcModel::noise_factor() const {
  if (!noise_factor_) throw SingularCovarianceError("transition noise: " + noise_error_);
  return *noise_factor_;
}

const GaussianDensity& GaussianPmcModel::noise_density() const {
  if (!noise_density_) throw SingularCovarianceError("transition noise: " + noise_error_);
  return *noise_density_;
}

const LikelihoodKernel& GaussianPmcModel::likelihood(LikelihoodMode mode) const {
  if (mode == LikelihoodMode::Predictive) {
    if (!predictive_) throw SingularCovarianceError("Sigma22: " + predictive_error_);
    return *predictive_;
  }
  if (!conditional_) throw SingularCovarianceError("conditional observation covariance: " + conditional_error_);
  return *conditional_;
}

bool is_psd_within_tolerance(const Matrix& cov) {
  if (cov.size() == 0) return true;
  const double tol = kPsdTol * std::max(std::abs(cov.trace()), 1e-300);
  return min_eigenvalue(cov) >= -tol;
}

Gaussian pair_prior(const Vector& m0, const Matrix& P0, const Matrix& H, const Matrix& R) {
  const Eigen::Index m = m0.size();
  const Eigen::Index q = H.rows();
  Gaussian g;
  g.mean.resize(m + q);
  g.mean << m0, H * m0;
  g.cov.resize(m + q, m + q);
  const Matrix hp = H * P0;
  g.cov.topLeftCorner(m, m) = P0;
  g.cov.topRightCorner(m, q) = hp.transpose();
  g.cov.bottomLeftCorner(q, m) = hp;
  g.cov.bottomRightCorner(q, q) = R + hp * H.transpose();
  return g;
}

GaussianPmcModel embed_hmc(const HmcSpec& spec) {
  spec.check_dimensions();
  const Eigen::Index m = spec.state_dim();
  const Eigen::Index q = spec.obs_dim();
  const Matrix& F = spec.F;
  const Matrix& H = spec.H;
  const Matrix& F2 = spec.F2;
  const Matrix& H2 = spec.H2;

  Matrix b(m + q, m + q);
  b.topLeftCorner(m, m) = F - F2 * H;
  b.topRightCorner(m, q) = F2;
  b.bottomLeftCorner(q, m) = H * F - H2 * H;
  b.bottomRightCorner(q, q) = H2;

  const Matrix s11 = spec.Q - F2 * spec.R * F2.transpose();
  const Matrix s21 = H * spec.Q - H2 * spec.R * F2.transpose();
  const Matrix s22 = spec.R - H2 * spec.R * H2.transpose() + H * spec.Q * H.transpose();
  Matrix sigma(m + q, m + q);
  sigma.topLeftCorner(m, m) = s11;
  sigma.bottomLeftCorner(q, m) = s21;
  sigma.topRightCorner(m, q) = s21.transpose();
  sigma.bottomRightCorner(q, q) = s22;

  if (!is_psd_within_tolerance(s11)) {
    throw InvalidEmbeddingError(
        "embed_hmc: Sigma11 = Q - F2 R F2^T is not PSD (min eigenvalue " + std::to_string(min_eigenvalue(s11)) +
            "); F2 is too large for Q and R",
        "Sigma11");
  }
  if (!is_psd_within_tolerance(s22)) {
    throw InvalidEmbeddingError("embed_hmc: Sigma22 is not PSD (min eigenvalue " +
                                    std::to_string(min_eigenvalue(s22)) + "); H2 is too large",
                                "Sigma22");
  }
  if (!is_psd_within_tolerance(sigma)) {
    throw InvalidEmbeddingError("embed_hmc: joint Sigma is not PSD (min eigenvalue " +
                                    std::to_string(min_eigenvalue(sigma)) + ")",
                                "Sigma");
  }
  return GaussianPmcModel(std::move(b), std::move(sigma), pair_prior(spec.m0, spec.P0, H, spec.R), m);
}

PairState transition_sample(const GaussianPmcModel& model, const PairState& prev, RandomStream& rng) {
  require_pair_dims(model, prev, "transition_sample");
  const Vector u = standard_normal_matrix(model.pair_dim(), 1, rng).col(0);
  const Vector next = model.B() * prev.stacked() + model.noise_factor().lower * u;
  return PairState::from_stacked(next, model.state_dim());
}

double transition_logpdf(const GaussianPmcModel& model, const PairState& next, const PairState& prev) {
  require_pair_dims(model, prev, "transition_logpdf");
  require_pair_dims(model, next, "transition_logpdf");
  return model.noise_density().log_density(next.stacked() - model.B() * prev.stacked());
}

double measurement_loglik(const GaussianPmcModel& model, const Vector& z, const PairState& predicted,
                          const PairState& prev, LikelihoodMode mode) {
  require_pair_dims(model, prev, "measurement_loglik");
  require_pair_dims(model, predicted, "measurement_loglik");
  if (z.size() != model.obs_dim()) throw DimensionError("measurement_loglik: measurement dimension mismatch");
  const Vector mean = model.B() * prev.stacked();
  const Eigen::Index m = model.state_dim();
  const LikelihoodKernel& kernel = model.likelihood(mode);
  const Vector obs_mean = mean.tail(model.obs_dim()) + kernel.gain() * (predicted.x - mean.head(m));
  return kernel.log_likelihood(z, obs_mean);
}

bool ModelDiagnostics::ok() const {
  for (const auto& c : checks) {
    if (!c.ok()) return false;
  }
  return true;
}

std::string ModelDiagnostics::to_string() const {
  std::ostringstream os;
  os.precision(6);
  for (const auto& c : checks) {
    os << c.name << ": symmetry residual " << c.symmetry_residual << (c.symmetric ? " ok" : " FAIL")
       << ", min eigenvalue " << c.min_eigenvalue << (c.psd ? " ok" : " FAIL") << "\n";
  }
  os << (ok() ? "model valid" : "model INVALID") << "\n";
  return os.str();
}

ModelDiagnostics validate_model(const GaussianPmcModel& model) {
  ModelDiagnostics report;
  auto check = [&](std::string name, const Matrix& cov) {
    CovarianceCheck c;
    c.name = std::move(name);
    c.symmetry_residual = symmetry_residual(cov);
    c.min_eigenvalue = min_eigenvalue(cov);
    c.symmetric = c.symmetry_residual <= kSymmetryTol;
    c.psd = is_psd_within_tolerance(cov);
    report.checks.push_back(std::move(c));
  };
  check("Sigma", model.sigma());
  check("Sigma11", model.sigma11());
  check("Sigma22", model.sigma22());
  check("init.cov", model.init().cov);
  return report;
}

}  // namespace pmcphd
