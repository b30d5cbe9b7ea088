#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pmcphd/gaussian.hpp"
#include "pmcphd/random.hpp"

namespace pmcphd {

/// Kinematic state x together with the observation y the model generated for it.
struct PairState {
  Vector x;
  Vector y;

  Vector stacked() const;
  static PairState from_stacked(const Vector& xi, Eigen::Index state_dim);
};

/// Classical state-space description plus the two cross-feed matrices that
/// turn it into a pairwise model.
struct HmcSpec {
  Matrix F;   // m x m
  Matrix Q;   // m x m
  Matrix H;   // q x m
  Matrix R;   // q x q
  Vector m0;  // m
  Matrix P0;  // m x m
  Matrix F2;  // m x q, previous observation into state
  Matrix H2;  // q x q, previous observation into observation

  Eigen::Index state_dim() const { return F.rows(); }
  Eigen::Index obs_dim() const { return H.rows(); }

  /// Throws DimensionError on inconsistent shapes.
  void check_dimensions() const;

  bool operator==(const HmcSpec& other) const;
};

/// How the per-particle measurement likelihood is formed from the joint
/// transition Gaussian N(B xi_prev, Sigma).
enum class LikelihoodMode {
  /// N(z; y-part of B xi_prev, Sigma22): the observation marginal of the
  /// transition, ignoring the sampled state.
  Predictive,
  /// N(z; ybar + Sigma21 Sigma11^-1 (x - xbar), Sigma22 - Sigma21 Sigma11^-1 Sigma21^T):
  /// the observation law given the sampled state.
  Conditional,
};

/// Observation density of a joint (x, y) Gaussian, in one of the two modes.
/// The observation mean for a pair mean (xbar, ybar) and a state x is
/// ybar + gain * (x - xbar).
class LikelihoodKernel {
 public:
  LikelihoodKernel(const Matrix& pair_cov, Eigen::Index state_dim, LikelihoodMode mode);

  double log_likelihood(const Vector& z, const Vector& observation_mean) const {
    return density_.log_density(z - observation_mean);
  }

  const Matrix& gain() const { return gain_; }
  const GaussianDensity& density() const { return density_; }

 private:
  Matrix gain_;
  GaussianDensity density_;
};

/// Linear Gaussian pairwise Markov chain: xi_k = B xi_{k-1} + w_k with
/// w_k ~ N(0, Sigma); xi_0 ~ init. Immutable once built.
class GaussianPmcModel {
 public:
  GaussianPmcModel(Matrix transition, Matrix noise_cov, Gaussian init, Eigen::Index state_dim);

  const Matrix& B() const { return transition_; }
  const Matrix& sigma() const { return noise_cov_; }
  const Gaussian& init() const { return init_; }
  Eigen::Index state_dim() const { return state_dim_; }
  Eigen::Index obs_dim() const { return transition_.rows() - state_dim_; }
  Eigen::Index pair_dim() const { return transition_.rows(); }

  Matrix B11() const { return transition_.topLeftCorner(state_dim_, state_dim_); }
  Matrix B12() const { return transition_.topRightCorner(state_dim_, obs_dim()); }
  Matrix B21() const { return transition_.bottomLeftCorner(obs_dim(), state_dim_); }
  Matrix B22() const { return transition_.bottomRightCorner(obs_dim(), obs_dim()); }
  Matrix sigma11() const { return noise_cov_.topLeftCorner(state_dim_, state_dim_); }
  Matrix sigma21() const { return noise_cov_.bottomLeftCorner(obs_dim(), state_dim_); }
  Matrix sigma22() const { return noise_cov_.bottomRightCorner(obs_dim(), obs_dim()); }

  /// Factor of Sigma; throws SingularCovarianceError for a non-PSD Sigma.
  const PsdFactor& noise_factor() const;
  /// Density of Sigma; throws SingularCovarianceError unless Sigma is PD.
  const GaussianDensity& noise_density() const;
  /// Throws SingularCovarianceError when the kernel could not be formed.
  const LikelihoodKernel& likelihood(LikelihoodMode mode) const;

 private:
  Matrix transition_;
  Matrix noise_cov_;
  Gaussian init_;
  Eigen::Index state_dim_;
  std::optional<PsdFactor> noise_factor_;
  std::optional<GaussianDensity> noise_density_;
  std::optional<LikelihoodKernel> predictive_;
  std::optional<LikelihoodKernel> conditional_;
  std::string noise_error_;
  std::string predictive_error_;
  std::string conditional_error_;
};

/// Builds the pairwise model whose state transition and observation law
/// match those of the HMC in spec, with the given cross-feeds.
/// Throws InvalidEmbeddingError naming the offending block.
GaussianPmcModel embed_hmc(const HmcSpec& spec);

/// Pair prior for an initial state law N(m0, P0) under observation (H, R).
Gaussian pair_prior(const Vector& m0, const Matrix& P0, const Matrix& H, const Matrix& R);

PairState transition_sample(const GaussianPmcModel& model, const PairState& prev, RandomStream& rng);

double transition_logpdf(const GaussianPmcModel& model, const PairState& next, const PairState& prev);

/// Log-likelihood of measurement z for a particle propagated from prev to predicted.
double measurement_loglik(const GaussianPmcModel& model, const Vector& z, const PairState& predicted,
                          const PairState& prev, LikelihoodMode mode = LikelihoodMode::Conditional);

struct CovarianceCheck {
  std::string name;
  double symmetry_residual = 0.0;
  double min_eigenvalue = 0.0;
  bool symmetric = false;
  bool psd = false;

  bool ok() const { return symmetric && psd; }
};

struct ModelDiagnostics {
  std::vector<CovarianceCheck> checks;  // Sigma, Sigma11, Sigma22, init.cov

  bool ok() const;
  std::string to_string() const;
};

ModelDiagnostics validate_model(const GaussianPmcModel& model);

/// Minimum eigenvalue tolerance used wherever a covariance is checked for PSD.
bool is_psd_within_tolerance(const Matrix& cov);

/// Structured text (JSON) form of an HmcSpec; parse(serialize(s)) == s exactly.
std::string serialize_hmc_spec(const HmcSpec& spec);
HmcSpec parse_hmc_spec(const std::string& text);

}  // namespace pmcphd
