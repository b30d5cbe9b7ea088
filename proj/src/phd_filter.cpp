#include "pmcphd/phd_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Factors and observation kernels of the birth components, built once per step.
struct BirthKernels {
  std::vector<PsdFactor> factors;
  std::vector<std::shared_ptr<const GaussianDensity>> obs_densities;
  std::vector<Matrix> gains;
  // Measurement-driven placement only: x | y = z and y | x conditionals of each component.
  std::vector<Matrix> y_to_x;
  std::vector<PsdFactor> x_given_y_factors;
  std::vector<std::shared_ptr<const GaussianDensity>> x_given_y_densities;
  std::vector<std::shared_ptr<const GaussianDensity>> x_densities;
  std::vector<Matrix> x_to_y;
  std::vector<PsdFactor> y_given_x_factors;
};

BirthKernels build_birth_kernels(const BirthModel& birth, Eigen::Index m, LikelihoodMode mode, bool driven) {
  BirthKernels k;
  for (const auto& c : birth.components) {
    const Eigen::Index n = c.law.dim();
    const Eigen::Index q = n - m;
    k.factors.push_back(psd_factor(c.law.cov));
    LikelihoodKernel lk(c.law.cov, m, mode);
    k.gains.push_back(lk.gain());
    k.obs_densities.push_back(std::make_shared<GaussianDensity>(lk.density()));
    if (driven) {
      const Matrix cxx = c.law.cov.topLeftCorner(m, m);
      const Matrix cyy = c.law.cov.bottomRightCorner(q, q);
      const Matrix cxy = c.law.cov.topRightCorner(m, q);
      const Matrix kx = cxy * cyy.completeOrthogonalDecomposition().pseudoInverse();
      const Matrix ky = cxy.transpose() * cxx.completeOrthogonalDecomposition().pseudoInverse();
      Matrix x_given_y = cxx - kx * cxy.transpose();
      x_given_y = 0.5 * (x_given_y + x_given_y.transpose()).eval();
      Matrix y_given_x = cyy - ky * cxy;
      y_given_x = 0.5 * (y_given_x + y_given_x.transpose()).eval();
      k.y_to_x.push_back(kx);
      k.x_given_y_factors.push_back(psd_factor(x_given_y));
      k.x_given_y_densities.push_back(std::make_shared<GaussianDensity>(x_given_y));
      k.x_densities.push_back(std::make_shared<GaussianDensity>(cxx));
      k.x_to_y.push_back(ky);
      k.y_given_x_factors.push_back(psd_factor(y_given_x));
    }
  }
  return k;
}

// Number of particles per component: each particle picks a component with
// probability proportional to its mass (uniformly if all masses are zero).
std::vector<Eigen::Index> allocate(const BirthModel& birth, std::size_t count, RandomStream& rng) {
  std::vector<Eigen::Index> counts(birth.components.size(), 0);
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& c : birth.components) {
    total += c.mass;
    cumulative.push_back(total);
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t pick;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      pick = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      pick = std::min(pick, counts.size() - 1);
    } else {
      pick = rng.index(counts.size());
    }
    ++counts[pick];
  }
  return counts;
}

double log_sum_exp(const Vector& a) {
  const double mx = a.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((a.array() - mx).exp().sum());
}

double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centers, Eigen::Index c) {
  return (points.col(i) - centers.col(c)).squaredNorm();
}

struct KMeansResult {
  Matrix centers;
  double objective = std::numeric_limits<double>::infinity();
};

KMeansResult weighted_kmeans_once(const Matrix& points, const Vector& weights, Eigen::Index k, RandomStream& rng) {
  const Eigen::Index n = points.cols();
  const Eigen::Index d = points.rows();
  Matrix centers(d, k);
  Vector best_d2 = Vector::Constant(n, std::numeric_limits<double>::infinity());

  // k-means++ seeding on weight * D^2.
  auto pick = [&](const Vector& score) {
    const double total = score.sum();
    if (!(total > 0.0)) return rng.index(static_cast<std::size_t>(n));
    double u = rng.uniform() * total;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= score[i];
      if (u < 0.0) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(n - 1);
  };
  centers.col(0) = points.col(static_cast<Eigen::Index>(pick(weights)));
  for (Eigen::Index c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) best_d2[i] = std::min(best_d2[i], squared_distance(points, i, centers, c - 1));
    centers.col(c) = points.col(static_cast<Eigen::Index>(pick(weights.cwiseProduct(best_d2))));
  }

  std::vector<Eigen::Index> label(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  KMeansResult out;
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      double bd = squared_distance(points, i, centers, 0);
      for (Eigen::Index c = 1; c < k; ++c) {
        const double dd = squared_distance(points, i, centers, c);
        if (dd < bd) {
          bd = dd;
          arg = c;
        }
      }
      dist[i] = bd;
      if (label[static_cast<std::size_t>(i)] != arg) {
        label[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    out.objective = weights.dot(dist);
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(d, k);
    Vector mass = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = label[static_cast<std::size_t>(i)];
      sums.col(c) += weights[i] * points.col(i);
      mass[c] += weights[i];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (mass[c] > 0.0) {
        centers.col(c) = sums.col(c) / mass[c];
      } else {
        // Empty cluster: restart it at the worst-served point.
        Eigen::Index far = 0;
        weights.cwiseProduct(dist).maxCoeff(&far);
        centers.col(c) = points.col(far);
        dist[far] = 0.0;
      }
    }
  }
  out.centers = std::move(centers);
  return out;
}

// Distinct x-columns among positively weighted particles, stopping at `limit`.
std::vector<Eigen::Index> distinct_points(const Matrix& points, const Vector& weights, std::size_t limit) {
  std::vector<Eigen::Index> found;
  for (Eigen::Index i = 0; i < points.cols() && found.size() < limit; ++i) {
    if (!(weights[i] > 0.0)) continue;
    bool seen = false;
    for (auto j : found) {
      if (points.col(i) == points.col(j)) {
        seen = true;
        break;
      }
    }
    if (!seen) found.push_back(i);
  }
  return found;
}

// Draws `count` indices from unnormalized weights given through `weight_at`.
template <typename WeightAt>
std::vector<Eigen::Index> draw_indices(Eigen::Index total_count, WeightAt weight_at, double total, std::size_t count,
                                       ResamplingScheme scheme, RandomStream& rng) {
  std::vector<double> positions(count);
  if (scheme == ResamplingScheme::Systematic) {
    const double u = rng.uniform();
    for (std::size_t j = 0; j < count; ++j) {
      positions[j] = (static_cast<double>(j) + u) / static_cast<double>(count) * total;
    }
  } else {
    for (auto& p : positions) p = rng.uniform() * total;
    std::sort(positions.begin(), positions.end());
  }
  std::vector<Eigen::Index> out(count);
  Eigen::Index i = 0;
  Eigen::Index last_positive = -1;
  double cumulative = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    while (i < total_count && cumulative + weight_at(i) <= positions[j]) {
      if (weight_at(i) > 0.0) last_positive = i;
      cumulative += weight_at(i);
      ++i;
    }
    if (i >= total_count) {
      // Round-off past the final cumulative sum.
      out[j] = last_positive;
    } else {
      out[j] = i;
    }
  }
  return out;
}

void check_weights(const Vector& w, const char* what) {
  if (!w.allFinite()) throw NumericCorruptionError(std::string(what) + ": non-finite particle weight");
}

}  // namespace

ParticleCloud::ParticleCloud(Eigen::Index m, Eigen::Index q, Eigen::Index count)
    : state_dim(m), weights(Vector::Zero(count)), pairs(Matrix::Zero(m + q, count)) {}

Particle ParticleCloud::particle(Eigen::Index i) const {
  return Particle{weights[i], PairState{x(i), y(i)}};
}

double BirthModel::total_mass() const {
  double s = 0.0;
  for (const auto& c : components) s += c.mass;
  return s;
}

void FilterParams::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  prob(p_survival, "p_S");
  prob(p_detection, "p_D");
  if (particles_per_target == 0) throw ConfigError("particles_per_target must be positive");
  if (birth_particles == 0) throw ConfigError("birth_particles must be positive");
  if (!(clutter_rate >= 0.0) || !std::isfinite(clutter_rate)) throw ConfigError("clutter_rate must be >= 0");
  if (!(region_volume > 0.0) || !std::isfinite(region_volume)) throw ConfigError("region volume must be positive");
  for (const auto& c : birth.components) {
    if (!(c.mass >= 0.0) || !std::isfinite(c.mass)) throw ConfigError("birth mass must be >= 0");
    if (c.law.cov.rows() != c.law.dim() || c.law.cov.cols() != c.law.dim()) {
      throw ConfigError("birth covariance has wrong shape");
    }
  }
}

void PriorProposal::propagate(const GaussianPmcModel& model, const Matrix& prev_pairs, std::span<const Vector>,
                              RandomStream& rng, Matrix& next_pairs, Vector& log_ratio) const {
  const Matrix u = standard_normal_matrix(model.pair_dim(), prev_pairs.cols(), rng);
  next_pairs = model.B() * prev_pairs + model.noise_factor().lower * u;
  log_ratio = Vector::Zero(prev_pairs.cols());
}

ScaledPriorProposal::ScaledPriorProposal(double scale) : scale_(scale) {
  if (!(scale > 0.0)) throw ConfigError("proposal scale must be positive");
}

void ScaledPriorProposal::propagate(const GaussianPmcModel& model, const Matrix& prev_pairs,
                                    std::span<const Vector>, RandomStream& rng, Matrix& next_pairs,
                                    Vector& log_ratio) const {
  const Matrix u = standard_normal_matrix(model.pair_dim(), prev_pairs.cols(), rng);
  next_pairs = model.B() * prev_pairs + scale_ * model.noise_factor().lower * u;
  // log N(s L u; 0, Sigma) - log N(s L u; 0, s^2 Sigma)
  const double d = static_cast<double>(model.pair_dim());
  log_ratio = (-0.5 * (scale_ * scale_ - 1.0) * u.colwise().squaredNorm().array() + d * std::log(scale_))
                  .matrix()
                  .transpose();
}

MeasurementMixtureProposal::MeasurementMixtureProposal(double prior_fraction) : prior_fraction_(prior_fraction) {
  if (!(prior_fraction > 0.0 && prior_fraction <= 1.0)) {
    throw ConfigError("proposal prior fraction must lie in (0, 1]");
  }
}

void MeasurementMixtureProposal::propagate(const GaussianPmcModel& model, const Matrix& prev_pairs,
                                           std::span<const Vector> measurements, RandomStream& rng,
                                           Matrix& next_pairs, Vector& log_ratio) const {
  if (measurements.empty() || prior_fraction_ == 1.0) {
    PriorProposal{}.propagate(model, prev_pairs, measurements, rng, next_pairs, log_ratio);
    return;
  }
  const Eigen::Index m = model.state_dim();
  const Eigen::Index q = model.obs_dim();
  const Eigen::Index n = prev_pairs.cols();
  const auto nz = static_cast<Eigen::Index>(measurements.size());
  const Matrix s11 = model.sigma11();
  const Matrix s21 = model.sigma21();
  const Matrix s22 = model.sigma22();

  const GaussianDensity predictive(s22);
  const GaussianDensity state_prior(s11);
  const Matrix x_gain = s21.transpose() * s22.ldlt().solve(Matrix::Identity(q, q));
  Matrix x_cond = s11 - x_gain * s21;
  x_cond = 0.5 * (x_cond + x_cond.transpose()).eval();
  const GaussianDensity state_given_obs(x_cond);
  const Matrix y_gain = s21 * s11.ldlt().solve(Matrix::Identity(m, m));
  Matrix y_cond = s22 - y_gain * s21.transpose();
  y_cond = 0.5 * (y_cond + y_cond.transpose()).eval();
  const PsdFactor y_factor = psd_factor(y_cond);

  Matrix z(q, nz);
  for (Eigen::Index j = 0; j < nz; ++j) z.col(j) = measurements[static_cast<std::size_t>(j)];
  const Matrix mean = model.B() * prev_pairs;
  const Matrix ux = standard_normal_matrix(m, n, rng);
  const Matrix uy = standard_normal_matrix(q, n, rng);
  next_pairs.resize(model.pair_dim(), n);
  log_ratio.resize(n);
  const double log_prior_part = std::log(prior_fraction_);
  const double log_obs_part = std::log1p(-prior_fraction_);
  Vector log_pick(nz);
  Vector log_terms(nz + 1);
  Matrix centres(m, nz);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector mx = mean.col(i).head(m);
    const Vector my = mean.col(i).tail(q);
    for (Eigen::Index j = 0; j < nz; ++j) {
      const Vector innovation = z.col(j) - my;
      log_pick[j] = predictive.log_density(innovation);
      centres.col(j) = mx + x_gain * innovation;
    }
    log_pick.array() -= log_sum_exp(log_pick);

    Vector x;
    if (rng.uniform() < prior_fraction_) {
      x = mx + state_prior.factor().lower * ux.col(i);
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      Eigen::Index pick = nz - 1;
      for (Eigen::Index j = 0; j < nz; ++j) {
        acc += std::exp(log_pick[j]);
        if (u < acc) {
          pick = j;
          break;
        }
      }
      x = centres.col(pick) + state_given_obs.factor().lower * ux.col(i);
    }
    const double log_transition = state_prior.log_density(x - mx);
    log_terms[0] = log_prior_part + log_transition;
    for (Eigen::Index j = 0; j < nz; ++j) {
      log_terms[j + 1] = log_obs_part + log_pick[j] + state_given_obs.log_density(x - centres.col(j));
    }
    log_ratio[i] = log_transition - log_sum_exp(log_terms);
    next_pairs.col(i).head(m) = x;
    next_pairs.col(i).tail(q) = my + y_gain * (x - mx) + y_factor.lower * uy.col(i);
  }
}

Particle UpdatedCloud::particle(Eigen::Index block, Eigen::Index i) const {
  Particle p = predicted.particle(i);
  if (block == 0) {
    p.weight = miss_weights[i];
  } else {
    p.weight = detection_weights(i, block - 1);
    p.pair.y = measurements.col(block - 1);
  }
  return p;
}

ParticleCloud UpdatedCloud::materialize() const {
  const Eigen::Index n = predicted.size();
  const Eigen::Index m = predicted.state_dim;
  ParticleCloud out(m, predicted.obs_dim(), size());
  out.step = predicted.step;
  out.weights.head(n) = miss_weights;
  out.pairs.leftCols(n) = predicted.pairs;
  for (Eigen::Index j = 0; j < measurement_count(); ++j) {
    const Eigen::Index off = (j + 1) * n;
    out.weights.segment(off, n) = detection_weights.col(j);
    out.pairs.middleCols(off, n) = predicted.pairs;
    out.pairs.block(m, off, predicted.obs_dim(), n).colwise() = measurements.col(j);
  }
  return out;
}

std::size_t round_cardinality(double n) {
  if (!(n > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(n + 0.5));
}

ParticleCloud init_cloud(const GaussianPmcModel& model, const FilterParams& params, double expected_targets,
                         RandomStream& rng) {
  if (!(expected_targets >= 0.0)) throw ConfigError("init_cloud: expected target count must be >= 0");
  const std::size_t count = params.particles_per_target * std::max<std::size_t>(1, round_cardinality(expected_targets));
  const Eigen::Index m = model.state_dim();
  ParticleCloud cloud(m, model.obs_dim(), static_cast<Eigen::Index>(count));
  cloud.step = 0;
  if (params.birth.empty()) {
    if (expected_targets > 0.0) throw ConfigError("init_cloud: empty birth model with a nonzero target count");
    return cloud;
  }
  const auto counts = allocate(params.birth, count, rng);
  Eigen::Index col = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto& law = params.birth.components[c].law;
    if (law.dim() != model.pair_dim()) throw DimensionError("init_cloud: birth law has wrong dimension");
    const PsdFactor f = psd_factor(law.cov);
    const Matrix u = standard_normal_matrix(law.dim(), counts[c], rng);
    cloud.pairs.middleCols(col, counts[c]) = (f.lower * u).colwise() + law.mean;
    col += counts[c];
  }
  cloud.weights.setConstant(expected_targets / static_cast<double>(count));
  return cloud;
}

PredictedCloud predict(const ParticleCloud& cloud, const GaussianPmcModel& model, const FilterParams& params,
                       std::span<const Vector> measurements, RandomStream& rng, const Proposal& proposal) {
  const Eigen::Index m = model.state_dim();
  const Eigen::Index q = model.obs_dim();
  if (cloud.size() > 0 && (cloud.pairs.rows() != model.pair_dim() || cloud.state_dim != m)) {
    throw DimensionError("predict: cloud dimensions do not match the model");
  }
  const Eigen::Index survivors = cloud.size();
  const bool births = !params.birth.empty();
  const Eigen::Index born = births ? static_cast<Eigen::Index>(params.birth_particles) : 0;

  PredictedCloud out;
  out.survivors = survivors;
  out.cloud = ParticleCloud(m, q, survivors + born);
  out.cloud.step = cloud.step + 1;
  out.observation_means.resize(q, survivors + born);

  if (survivors > 0) {
    Matrix next;
    Vector log_ratio;
    proposal.propagate(model, cloud.pairs, measurements, rng, next, log_ratio);
    if (proposal.is_prior()) {
      out.cloud.weights.head(survivors) = params.p_survival * cloud.weights;
    } else {
      for (Eigen::Index i = 0; i < survivors; ++i) {
        if (!std::isfinite(log_ratio[i])) {
          throw WeightDegeneracyError("predict: proposal density is zero at particle " + std::to_string(i),
                                      static_cast<std::size_t>(i));
        }
      }
      out.cloud.weights.head(survivors) =
          params.p_survival * cloud.weights.cwiseProduct(log_ratio.array().exp().matrix());
    }
    out.cloud.pairs.leftCols(survivors) = next;
    const LikelihoodKernel& kernel = model.likelihood(params.likelihood);
    const Matrix mean = model.B() * cloud.pairs;
    out.observation_means.leftCols(survivors) = mean.bottomRows(q) + kernel.gain() * (next.topRows(m) - mean.topRows(m));
    out.blocks.push_back({0, survivors, std::make_shared<GaussianDensity>(kernel.density())});
  }

  if (born > 0) {
    const bool driven = params.birth_placement == BirthPlacement::MeasurementDriven && !measurements.empty();
    const BirthKernels kernels = build_birth_kernels(params.birth, m, params.likelihood, driven);
    const auto counts = allocate(params.birth, static_cast<std::size_t>(born), rng);
    const double total_mass = params.birth.total_mass();
    const double base_weight = total_mass / static_cast<double>(born);
    Eigen::Index col = survivors;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const Eigen::Index nc = counts[c];
      if (nc == 0) continue;
      const auto& law = params.birth.components[c].law;
      if (law.dim() != model.pair_dim()) throw DimensionError("predict: birth law has wrong dimension");
      Matrix drawn;
      if (!driven) {
        const Matrix u = standard_normal_matrix(law.dim(), nc, rng);
        drawn = (kernels.factors[c].lower * u).colwise() + law.mean;
        out.cloud.weights.segment(col, nc).setConstant(base_weight);
      } else {
        // x from the component conditioned on y = z_j for a uniformly chosen
        // measurement j, then y from the component's law of y given x.
        const auto nz = static_cast<Eigen::Index>(measurements.size());
        Matrix centres(m, nz);
        for (Eigen::Index j = 0; j < nz; ++j) {
          centres.col(j) = law.mean.head(m) + kernels.y_to_x[c] * (measurements[static_cast<std::size_t>(j)] - law.mean.tail(q));
        }
        const GaussianDensity& proposal_density = *kernels.x_given_y_densities[c];
        const GaussianDensity& prior_density = *kernels.x_densities[c];
        drawn.resize(law.dim(), nc);
        const Matrix ux = standard_normal_matrix(m, nc, rng);
        const Matrix uy = standard_normal_matrix(q, nc, rng);
        Vector log_terms(nz);
        for (Eigen::Index i = 0; i < nc; ++i) {
          const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(nz)));
          const Vector x = centres.col(j) + kernels.x_given_y_factors[c].lower * ux.col(i);
          drawn.col(i).head(m) = x;
          drawn.col(i).tail(q) = law.mean.tail(q) + kernels.x_to_y[c] * (x - law.mean.head(m)) +
                                 kernels.y_given_x_factors[c].lower * uy.col(i);
          for (Eigen::Index r = 0; r < nz; ++r) log_terms[r] = proposal_density.log_density(x - centres.col(r));
          const double log_proposal = log_sum_exp(log_terms) - std::log(static_cast<double>(nz));
          const double log_birth = prior_density.log_density(x - law.mean.head(m));
          const double ratio = std::exp(log_birth - log_proposal);
          if (!std::isfinite(ratio)) {
            throw WeightDegeneracyError("predict: birth proposal density is zero at particle " +
                                            std::to_string(col + i),
                                        static_cast<std::size_t>(col + i));
          }
          out.cloud.weights[col + i] = base_weight * ratio;
        }
      }
      out.cloud.pairs.middleCols(col, nc) = drawn;
      out.observation_means.middleCols(col, nc) =
          (kernels.gains[c] * (drawn.topRows(m).colwise() - law.mean.head(m))).colwise() + law.mean.tail(q);
      out.blocks.push_back({col, col + nc, kernels.obs_densities[c]});
      col += nc;
    }
  }
  check_weights(out.cloud.weights, "predict");
  return out;
}

UpdatedCloud update(const PredictedCloud& predicted, const GaussianPmcModel& model, const FilterParams& params,
                    std::span<const Vector> measurements) {
  const Eigen::Index q = model.obs_dim();
  const Eigen::Index n = predicted.cloud.size();
  const auto nz = static_cast<Eigen::Index>(measurements.size());
  UpdatedCloud out;
  out.predicted = predicted.cloud;
  out.measurements.resize(q, nz);
  for (Eigen::Index j = 0; j < nz; ++j) {
    if (measurements[static_cast<std::size_t>(j)].size() != q) {
      throw DimensionError("update: measurement dimension mismatch");
    }
    if (!measurements[static_cast<std::size_t>(j)].allFinite()) {
      throw NumericCorruptionError("update: non-finite measurement");
    }
    out.measurements.col(j) = measurements[static_cast<std::size_t>(j)];
  }
  const Vector& w = predicted.cloud.weights;
  out.miss_weights = (1.0 - params.p_detection) * w;
  out.detection_weights = Matrix::Zero(n, nz);
  if (nz == 0 || n == 0) return out;

  const double kappa = params.clutter_intensity();
  const double log_pd = std::log(params.p_detection);
  const Vector log_w = w.array().log().matrix();
  for (Eigen::Index j = 0; j < nz; ++j) {
    Vector a(n);
    for (const auto& b : predicted.blocks) {
      const Eigen::Index len = b.end - b.begin;
      const Matrix residual =
          (-predicted.observation_means.middleCols(b.begin, len)).colwise() + out.measurements.col(j);
      a.segment(b.begin, len) = b.density->log_density_columns(residual);
    }
    a.array() += log_pd + log_w.array();
    const double top = a.maxCoeff();
    if (!std::isfinite(top)) {
      // Every numerator is zero.
      if (kappa == 0.0) out.underflowed.push_back(static_cast<std::size_t>(j));
      continue;
    }
    const Vector scaled = (a.array() - top).exp().matrix();
    const double clutter = kappa > 0.0 ? std::exp(std::log(kappa) - top) : 0.0;
    const double denom = clutter + scaled.sum();
    if (!std::isfinite(denom)) continue;  // clutter dominates beyond double range
    out.detection_weights.col(j) = scaled / denom;
  }
  check_weights(out.detection_weights.reshaped(), "update");
  return out;
}

double estimate_cardinality(const UpdatedCloud& updated) { return updated.mass(); }

ParticleCloud resample(const UpdatedCloud& updated, const FilterParams& params, RandomStream& rng) {
  check_weights(updated.miss_weights, "resample");
  check_weights(updated.detection_weights.reshaped(), "resample");
  const Eigen::Index n = updated.predicted.size();
  const Eigen::Index m = updated.predicted.state_dim;
  const Eigen::Index q = updated.predicted.obs_dim();
  const double total = updated.mass();
  const std::size_t count = params.particles_per_target * std::max<std::size_t>(1, round_cardinality(total));
  ParticleCloud out(m, q, static_cast<Eigen::Index>(count));
  out.step = updated.predicted.step;
  if (!(total > 0.0)) {
    for (Eigen::Index i = 0; i < out.size() && n > 0; ++i) out.pairs.col(i) = updated.predicted.pairs.col(i % n);
    return out;
  }
  auto weight_at = [&](Eigen::Index k) {
    const Eigen::Index block = k / n;
    const Eigen::Index i = k % n;
    return block == 0 ? updated.miss_weights[i] : updated.detection_weights(i, block - 1);
  };
  const auto picks = draw_indices(updated.size(), weight_at, total, count, params.resampling, rng);
  for (std::size_t j = 0; j < count; ++j) {
    const Eigen::Index block = picks[j] / n;
    const Eigen::Index i = picks[j] % n;
    const auto col = static_cast<Eigen::Index>(j);
    out.pairs.col(col) = updated.predicted.pairs.col(i);
    if (block > 0) out.pairs.col(col).tail(q) = updated.measurements.col(block - 1);
  }
  out.weights.setConstant(total / static_cast<double>(count));
  return out;
}

ParticleCloud resample(const ParticleCloud& cloud, const FilterParams& params, RandomStream& rng) {
  check_weights(cloud.weights, "resample");
  const double total = cloud.mass();
  const std::size_t count = params.particles_per_target * std::max<std::size_t>(1, round_cardinality(total));
  ParticleCloud out(cloud.state_dim, cloud.obs_dim(), static_cast<Eigen::Index>(count));
  out.step = cloud.step;
  if (!(total > 0.0)) {
    for (Eigen::Index i = 0; i < out.size() && cloud.size() > 0; ++i) out.pairs.col(i) = cloud.pairs.col(i % cloud.size());
    return out;
  }
  auto weight_at = [&](Eigen::Index k) { return cloud.weights[k]; };
  const auto picks = draw_indices(cloud.size(), weight_at, total, count, params.resampling, rng);
  for (std::size_t j = 0; j < count; ++j) out.pairs.col(static_cast<Eigen::Index>(j)) = cloud.pairs.col(picks[j]);
  out.weights.setConstant(total / static_cast<double>(count));
  return out;
}

EstimateSet extract_states(const ParticleCloud& cloud, RandomStream& rng, int restarts) {
  EstimateSet est;
  est.cardinality = cloud.mass();
  std::size_t count = round_cardinality(est.cardinality);
  if (count == 0 || cloud.size() == 0) return est;
  const Matrix points = cloud.pairs.topRows(cloud.state_dim);
  const auto distinct = distinct_points(points, cloud.weights, count);
  if (distinct.size() < count) {
    est.degenerate = true;
    for (auto i : distinct) est.states.emplace_back(points.col(i));
    est.count = est.states.size();
    return est;
  }
  KMeansResult best;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult run = weighted_kmeans_once(points, cloud.weights, static_cast<Eigen::Index>(count), rng);
    if (run.objective < best.objective) best = std::move(run);
  }
  for (Eigen::Index c = 0; c < best.centers.cols(); ++c) est.states.emplace_back(best.centers.col(c));
  est.count = count;
  return est;
}

WeightedSamples marginal_intensity(const ParticleCloud& cloud) {
  return WeightedSamples{cloud.weights, cloud.pairs.topRows(cloud.state_dim)};
}

StepResult filter_step(const ParticleCloud& cloud, const GaussianPmcModel& model, const FilterParams& params,
                       std::span<const Vector> measurements, RandomStream& rng, const Proposal& proposal) {
  const PredictedCloud predicted = predict(cloud, model, params, measurements, rng, proposal);
  const UpdatedCloud updated = update(predicted, model, params, measurements);
  StepResult result;
  result.underflowed = updated.underflowed;
  result.cloud = resample(updated, params, rng);
  result.estimates = extract_states(result.cloud, rng);
  return result;
}

PhdFilter::PhdFilter(GaussianPmcModel model, FilterParams params, std::uint64_t seed,
                     std::shared_ptr<const Proposal> proposal)
    : model_(std::move(model)), params_(std::move(params)), rng_(seed), proposal_(std::move(proposal)) {
  params_.validate();
  if (!proposal_) proposal_ = std::make_shared<PriorProposal>();
  cloud_ = ParticleCloud(model_.state_dim(), model_.obs_dim(), 0);
}

void PhdFilter::initialize(double expected_targets) {
  cloud_ = init_cloud(model_, params_, expected_targets, rng_);
  estimates_ = EstimateSet{};
}

const EstimateSet& PhdFilter::step(std::span<const Vector> measurements) {
  StepResult r = filter_step(cloud_, model_, params_, measurements, rng_, *proposal_);
  cloud_ = std::move(r.cloud);
  estimates_ = std::move(r.estimates);
  return estimates_;
}

}  // namespace pmcphd
