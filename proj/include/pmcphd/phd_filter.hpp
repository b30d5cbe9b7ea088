#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "pmcphd/gaussian.hpp"
#include "pmcphd/pmc_model.hpp"
#include "pmcphd/random.hpp"

namespace pmcphd {

struct Particle {
  double weight = 0.0;
  PairState pair;
};

/// Weighted pair particles approximating the joint intensity v_k(x, y).
/// Column i of `pairs` is the stacked pair [x; y] of particle i.
struct ParticleCloud {
  Eigen::Index state_dim = 0;
  int step = 0;
  Vector weights;
  Matrix pairs;

  ParticleCloud() = default;
  ParticleCloud(Eigen::Index state_dim, Eigen::Index obs_dim, Eigen::Index count);

  Eigen::Index size() const { return weights.size(); }
  Eigen::Index obs_dim() const { return pairs.rows() - state_dim; }
  double mass() const { return weights.sum(); }
  Particle particle(Eigen::Index i) const;
  auto x(Eigen::Index i) const { return pairs.col(i).head(state_dim); }
  auto y(Eigen::Index i) const { return pairs.col(i).tail(obs_dim()); }
};

struct BirthComponent {
  double mass = 0.0;
  Gaussian law;  // over the pair space
};

struct BirthModel {
  std::vector<BirthComponent> components;

  double total_mass() const;
  bool empty() const { return components.empty(); }
};

enum class ResamplingScheme { Systematic, Multinomial };

/// Where birth particles are drawn from.
enum class BirthPlacement {
  /// Directly from the birth law.
  Prior,
  /// x from each birth component conditioned on y equal to a current
  /// measurement (uniform mixture over Z_k), y from the component given x,
  /// with importance weights correcting back to the birth law.
  MeasurementDriven,
};

struct FilterParams {
  double p_survival = 0.98;
  double p_detection = 0.9;
  std::size_t particles_per_target = 2000;
  std::size_t birth_particles = 500;
  double clutter_rate = 10.0;
  double region_volume = 16e6;
  BirthModel birth;
  ResamplingScheme resampling = ResamplingScheme::Systematic;
  LikelihoodMode likelihood = LikelihoodMode::Conditional;
  BirthPlacement birth_placement = BirthPlacement::Prior;

  /// Uniform clutter intensity kappa(z) = clutter_rate / region_volume.
  double clutter_intensity() const { return clutter_rate / region_volume; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Importance density for surviving particles.
class Proposal {
 public:
  virtual ~Proposal() = default;
  /// Propagates every column of prev_pairs, writing the drawn pairs to
  /// next_pairs and log(transition density / proposal density) to log_ratio.
  virtual void propagate(const GaussianPmcModel& model, const Matrix& prev_pairs,
                         std::span<const Vector> measurements, RandomStream& rng, Matrix& next_pairs,
                         Vector& log_ratio) const = 0;
  /// True when the proposal is the transition density itself (log_ratio == 0).
  virtual bool is_prior() const { return false; }
};

/// q_k = transition density.
class PriorProposal final : public Proposal {
 public:
  void propagate(const GaussianPmcModel& model, const Matrix& prev_pairs, std::span<const Vector> measurements,
                 RandomStream& rng, Matrix& next_pairs, Vector& log_ratio) const override;
  bool is_prior() const override { return true; }
};

/// Transition density with its noise standard deviation multiplied by scale.
class ScaledPriorProposal final : public Proposal {
 public:
  explicit ScaledPriorProposal(double scale);
  void propagate(const GaussianPmcModel& model, const Matrix& prev_pairs, std::span<const Vector> measurements,
                 RandomStream& rng, Matrix& next_pairs, Vector& log_ratio) const override;

 private:
  double scale_;
};

/// Mixture of the transition density (weight prior_fraction) and the
/// transition conditioned on y = z_j, with z_j picked in proportion to its
/// predictive density N(z_j; ybar, Sigma22). y is then drawn from the
/// transition given the proposed x. Falls back to the prior when Z_k is empty.
class MeasurementMixtureProposal final : public Proposal {
 public:
  explicit MeasurementMixtureProposal(double prior_fraction = 0.5);
  void propagate(const GaussianPmcModel& model, const Matrix& prev_pairs, std::span<const Vector> measurements,
                 RandomStream& rng, Matrix& next_pairs, Vector& log_ratio) const override;

  double prior_fraction() const { return prior_fraction_; }

 private:
  double prior_fraction_;
};

/// Observation-likelihood kernel shared by a contiguous range of predicted particles.
struct LikelihoodBlock {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  std::shared_ptr<const GaussianDensity> density;
};

/// Predicted cloud plus what the update needs: the per-particle observation
/// mean and the covariance it is evaluated with.
struct PredictedCloud {
  ParticleCloud cloud;
  Matrix observation_means;  // q x N
  std::vector<LikelihoodBlock> blocks;
  Eigen::Index survivors = 0;  // the first `survivors` particles came from the previous cloud
};

/// Updated intensity held as weighted references into the predicted cloud:
/// a missed-detection copy of every particle plus, per measurement, a copy with y = z.
struct UpdatedCloud {
  ParticleCloud predicted;
  Matrix measurements;        // q x |Z|
  Vector miss_weights;        // N
  Matrix detection_weights;   // N x |Z|
  std::vector<std::size_t> underflowed;  // measurements that got zero-weight copies

  Eigen::Index measurement_count() const { return measurements.cols(); }
  Eigen::Index size() const { return predicted.size() * (1 + measurement_count()); }
  double mass() const { return miss_weights.sum() + detection_weights.sum(); }
  /// Particle of block `block` (0 = missed detection, j >= 1 = measurement j - 1).
  Particle particle(Eigen::Index block, Eigen::Index i) const;
  ParticleCloud materialize() const;
};

struct EstimateSet {
  std::vector<Vector> states;  // x-space
  double cardinality = 0.0;    // before rounding
  std::size_t count = 0;
  bool degenerate = false;     // fewer distinct particles than the rounded cardinality
};

struct WeightedSamples {
  Vector weights;
  Matrix states;  // m x N
  double mass() const { return weights.sum(); }
};

/// Round half up, clamped at zero.
std::size_t round_cardinality(double n);

ParticleCloud init_cloud(const GaussianPmcModel& model, const FilterParams& params, double expected_targets,
                         RandomStream& rng);

PredictedCloud predict(const ParticleCloud& cloud, const GaussianPmcModel& model, const FilterParams& params,
                       std::span<const Vector> measurements, RandomStream& rng,
                       const Proposal& proposal = PriorProposal{});

UpdatedCloud update(const PredictedCloud& predicted, const GaussianPmcModel& model, const FilterParams& params,
                    std::span<const Vector> measurements);

double estimate_cardinality(const UpdatedCloud& updated);

/// Resamples to particles_per_target * max(1, round(N)) particles of equal weight N / count.
ParticleCloud resample(const UpdatedCloud& updated, const FilterParams& params, RandomStream& rng);
ParticleCloud resample(const ParticleCloud& cloud, const FilterParams& params, RandomStream& rng);

/// Weighted k-means on the x-components with round(mass) clusters.
EstimateSet extract_states(const ParticleCloud& cloud, RandomStream& rng, int restarts = 10);

WeightedSamples marginal_intensity(const ParticleCloud& cloud);

struct StepResult {
  ParticleCloud cloud;
  EstimateSet estimates;
  std::vector<std::size_t> underflowed;
};

StepResult filter_step(const ParticleCloud& cloud, const GaussianPmcModel& model, const FilterParams& params,
                       std::span<const Vector> measurements, RandomStream& rng,
                       const Proposal& proposal = PriorProposal{});

/// Stateful driver around filter_step.
class PhdFilter {
 public:
  PhdFilter(GaussianPmcModel model, FilterParams params, std::uint64_t seed,
            std::shared_ptr<const Proposal> proposal = std::make_shared<PriorProposal>());

  void initialize(double expected_targets);
  const EstimateSet& step(std::span<const Vector> measurements);

  const ParticleCloud& cloud() const { return cloud_; }
  const EstimateSet& estimates() const { return estimates_; }
  const GaussianPmcModel& model() const { return model_; }
  const FilterParams& params() const { return params_; }

 private:
  GaussianPmcModel model_;
  FilterParams params_;
  RandomStream rng_;
  std::shared_ptr<const Proposal> proposal_;
  ParticleCloud cloud_;
  EstimateSet estimates_;
};

}  // namespace pmcphd
