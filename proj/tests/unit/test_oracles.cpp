#include <cmath>

#include <gtest/gtest.h>

#include "pmcphd/errors.hpp"
#include "pmcphd/oracles.hpp"
#include "pmcphd/scenario.hpp"
#include "support/toy_model.hpp"

namespace pmcphd {
namespace {

using test_support::toy_spec;
using test_support::without_cross_feeds;

struct TextbookKalman {
  Vector mean;
  Matrix cov;

  void update(const Matrix& h, const Matrix& r, const Vector& z) {
    const Matrix s = h * cov * h.transpose() + r;
    const Matrix k = cov * h.transpose() * s.inverse();
    mean = mean + k * (z - h * mean);
    cov = (Matrix::Identity(cov.rows(), cov.cols()) - k * h) * cov;
  }
  void predict(const Matrix& f, const Matrix& q) {
    mean = f * mean;
    cov = f * cov * f.transpose() + q;
  }
};

std::vector<Vector> simulate_observations(const GaussianPmcModel& model, int steps, RandomStream& rng) {
  PairState state = PairState::from_stacked(mvn_sample(model.init(), rng), model.state_dim());
  std::vector<Vector> ys{state.y};
  for (int k = 1; k < steps; ++k) {
    state = transition_sample(model, state, rng);
    ys.push_back(state.y);
  }
  return ys;
}

TEST(PmcKalman, NoNoiseIdentityKeepsMean) {
  GaussianPmcModel model(Matrix::Identity(2, 2), Matrix::Zero(2, 2),
                         Gaussian{Vector::Zero(2), Matrix::Identity(2, 2)}, 1);
  PmcKalmanState s{Vector::Constant(1, 2.5), Matrix::Constant(1, 1, 0.7), Vector::Constant(1, -1.0)};
  const PmcKalmanState next = pmc_kalman_step(s, model, Vector::Constant(1, 40.0));
  EXPECT_EQ(next.mean(0), 2.5);
  EXPECT_EQ(next.cov(0, 0), 0.7);
  EXPECT_EQ(next.last_y(0), 40.0);
}

TEST(PmcKalman, SingularInnovationThrows) {
  // Two noise-free copies of the state: rank-one innovation covariance.
  Matrix b = Matrix::Zero(3, 3);
  b(0, 0) = 1.0;
  b(1, 0) = 1.0;
  b(2, 0) = 1.0;
  GaussianPmcModel model(b, Matrix::Zero(3, 3), Gaussian{Vector::Zero(3), Matrix::Identity(3, 3)}, 1);
  PmcKalmanState s{Vector::Zero(1), Matrix::Identity(1, 1), Vector::Zero(2)};
  EXPECT_THROW(pmc_kalman_step(s, model, Vector::Zero(2)), SingularCovarianceError);
}

TEST(PmcKalman, ReducesToTextbookFilter) {
  for (const HmcSpec& spec : {without_cross_feeds(toy_spec()), without_cross_feeds(default_scenario().model)}) {
    const GaussianPmcModel model = embed_hmc(spec);
    RandomStream rng(17);
    const std::vector<Vector> ys = simulate_observations(model, 51, rng);
    TextbookKalman kf{spec.m0, spec.P0};
    kf.update(spec.H, spec.R, ys[0]);
    PmcKalmanState s = pmc_kalman_init(model, ys[0]);
    double worst = (s.mean - kf.mean).cwiseAbs().maxCoeff();
    for (std::size_t k = 1; k < ys.size(); ++k) {
      kf.predict(spec.F, spec.Q);
      kf.update(spec.H, spec.R, ys[k]);
      s = pmc_kalman_step(s, model, ys[k]);
      worst = std::max(worst, (s.mean - kf.mean).cwiseAbs().maxCoeff());
      EXPECT_LT((s.cov - kf.cov).cwiseAbs().maxCoeff(), 1e-8);
    }
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(PmcKalman, ConditioningShrinksCovariance) {
  const GaussianPmcModel model = embed_hmc(default_scenario().model);
  RandomStream rng(18);
  const std::vector<Vector> ys = simulate_observations(model, 30, rng);
  PmcKalmanState s = pmc_kalman_init(model, ys[0]);
  for (std::size_t k = 1; k < ys.size(); ++k) {
    const Matrix cxx = model.B11() * s.cov * model.B11().transpose() + model.sigma11();
    s = pmc_kalman_step(s, model, ys[k]);
    EXPECT_GE(min_eigenvalue(cxx - s.cov), -1e-9);
    EXPECT_GE(min_eigenvalue(s.cov), -1e-9);
    EXPECT_LT(symmetry_residual(s.cov), 1e-12);
  }
}

TEST(PmcKalman, PosteriorMeanMatchesRegression) {
  const GaussianPmcModel model = embed_hmc(toy_spec());
  const int horizon = 4;
  const Eigen::Index n_coef = horizon;

  // The posterior mean is linear in (y_0..y_{k}) with zero intercept for a zero prior mean.
  Vector oracle_coef(n_coef);
  double oracle_var = 0.0;
  for (Eigen::Index c = 0; c < n_coef; ++c) {
    std::vector<Vector> ys(horizon, Vector::Zero(1));
    ys[static_cast<std::size_t>(c)](0) = 1.0;
    PmcKalmanState s = pmc_kalman_init(model, ys[0]);
    for (int k = 1; k < horizon; ++k) s = pmc_kalman_step(s, model, ys[static_cast<std::size_t>(k)]);
    oracle_coef(c) = s.mean(0);
    oracle_var = s.cov(0, 0);
  }

  const int n = 100000;
  Matrix design(n, n_coef);
  Vector target(n);
  RandomStream rng(19);
  for (int r = 0; r < n; ++r) {
    PairState state = PairState::from_stacked(mvn_sample(model.init(), rng), 1);
    design(r, 0) = state.y(0);
    for (int k = 1; k < horizon; ++k) {
      state = transition_sample(model, state, rng);
      design(r, k) = state.y(0);
    }
    target(r) = state.x(0);
  }
  const Matrix gram = design.transpose() * design;
  const Vector coef = gram.ldlt().solve(design.transpose() * target);
  const double resid_var = (target - design * coef).squaredNorm() / (n - n_coef);
  const Matrix coef_cov = resid_var * gram.inverse();
  for (Eigen::Index c = 0; c < n_coef; ++c) {
    EXPECT_LT(std::abs(coef(c) - oracle_coef(c)), 3.0 * std::sqrt(coef_cov(c, c))) << "coefficient " << c;
  }
  EXPECT_NEAR(resid_var / oracle_var, 1.0, 0.02);
}

TEST(UniformGrid, CellsAndCentres) {
  const UniformGrid g(-2.0, 2.0, 8);
  EXPECT_DOUBLE_EQ(g.spacing, 0.5);
  EXPECT_DOUBLE_EQ(g.center(0), -1.75);
  EXPECT_DOUBLE_EQ(g.max(), 2.0);
  EXPECT_EQ(g.cell_of(-2.0), 0);
  EXPECT_EQ(g.cell_of(-1.51), 0);
  EXPECT_EQ(g.cell_of(1.99), 7);
  EXPECT_EQ(g.cell_of(2.0), -1);
  EXPECT_EQ(g.cell_of(-2.01), -1);
  EXPECT_THROW(UniformGrid(1.0, 1.0, 4), DimensionError);
}

struct ToyGrid {
  GaussianPmcModel model = embed_hmc(toy_spec());
  UniformGrid gx{-20.0, 20.0, 200};
  UniformGrid gy{-20.0, 20.0, 200};
  GridIntensity zero{gx, gy};
};

TEST(GridPredict, BirthOnly) {
  ToyGrid t;
  const GridIntensity birth = grid_density(t.gx, t.gy, t.model.init(), 1.0);
  const GridIntensity out = grid_phd_predict(t.zero, t.model, 0.98, birth);
  EXPECT_NEAR(out.mass(), 1.0, 1e-6);
}

TEST(GridPredict, MassPreservedWithoutLoss) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 1.0);
  const GridIntensity out = grid_phd_predict(v, t.model, 1.0, t.zero);
  EXPECT_NEAR(out.mass(), v.mass(), 1e-3);
}

TEST(GridPredict, SurvivalScalesMass) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 2.0);
  const GridIntensity birth = grid_density(t.gx, t.gy, t.model.init(), 0.3);
  const GridIntensity out = grid_phd_predict(v, t.model, 0.98, birth);
  EXPECT_NEAR(out.mass(), 1.96 + birth.mass(), 1e-3);
}

TEST(GridPredict, GaussianPropagatesAnalytically) {
  ToyGrid t;
  Gaussian law{Vector(2), Matrix(2, 2)};
  law.mean << 1.5, -2.0;
  law.cov << 2.0, 0.8, 0.8, 1.5;
  const GridIntensity v = grid_density(t.gx, t.gy, law, 1.0);
  const GridIntensity out = grid_phd_predict(v, t.model, 1.0, t.zero);
  const Gaussian expected{t.model.B() * law.mean, t.model.B() * law.cov * t.model.B().transpose() + t.model.sigma()};
  double mass = 0.0;
  Vector mean = Vector::Zero(2);
  Matrix second = Matrix::Zero(2, 2);
  for (int i = 0; i < t.gx.count; ++i) {
    for (int j = 0; j < t.gy.count; ++j) {
      const double w = out.values(i, j) * t.gx.spacing * t.gy.spacing;
      const Eigen::Vector2d c(t.gx.center(i), t.gy.center(j));
      mass += w;
      mean += w * c;
      second += w * c * c.transpose();
    }
  }
  mean /= mass;
  const Matrix cov = second / mass - mean * mean.transpose();
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_LT((mean - expected.mean).norm(), 1e-9);
  // Bilinear deposition adds at most h^2 / 4 of variance per axis.
  const double h2 = t.gx.spacing * t.gx.spacing;
  EXPECT_LT((cov - expected.cov).cwiseAbs().maxCoeff(), 0.25 * h2);
  const GridIntensity exact = grid_density(t.gx, t.gy, expected, 1.0);
  EXPECT_LT((out.values - exact.values).cwiseAbs().maxCoeff(), 0.03 * exact.values.maxCoeff());
}

TEST(GridPredict, RejectsMismatchedInputs) {
  ToyGrid t;
  GridIntensity other(UniformGrid(-10.0, 10.0, 200), t.gy);
  EXPECT_THROW(grid_phd_predict(t.zero, t.model, 1.0, other), DimensionError);
  const GaussianPmcModel big = embed_hmc(default_scenario().model);
  EXPECT_THROW(grid_phd_predict(t.zero, big, 1.0, t.zero), DimensionError);
}

TEST(GridUpdate, NoMeasurementsScalesPointwise) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 1.5);
  const GridIntensity out = grid_phd_update(v, t.model, 0.9, 0.01, {});
  EXPECT_LT((out.values - (1.0 - 0.9) * v.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GridUpdate, FullDetectionNormalizes) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 1.5);
  const GridIntensity out = grid_phd_update(v, t.model, 1.0, 0.0, {0.37});
  EXPECT_NEAR(out.x_marginal().sum() * t.gx.spacing, 1.0, 1e-6);
  EXPECT_NEAR(out.mass(), 1.0, 1e-6);
}

TEST(GridUpdate, ClutterEqualToTargetTermHalvesMass) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 1.5);
  const double z = 0.83;
  const double p_d = 0.9;
  // Independent linear interpolation of v(x, z) between bracketing y centres.
  const double pos = (z - t.gy.min) / t.gy.spacing - 0.5;
  const int j = static_cast<int>(std::floor(pos));
  const double f = pos - j;
  double integral = 0.0;
  for (int i = 0; i < t.gx.count; ++i) {
    integral += ((1.0 - f) * v.values(i, j) + f * v.values(i, j + 1)) * t.gx.spacing;
  }
  const double kappa = p_d * integral;
  const GridIntensity out = grid_phd_update(v, t.model, p_d, kappa, {z});
  const double miss = (1.0 - p_d) * v.mass();
  EXPECT_NEAR(out.mass() - miss, 0.5, 1e-6);
}

TEST(GridUpdate, MeasurementOutsideGridThrows) {
  ToyGrid t;
  const GridIntensity v = grid_density(t.gx, t.gy, t.model.init(), 1.0);
  EXPECT_THROW(grid_phd_update(v, t.model, 0.9, 0.1, {25.0}), Error);
}

TEST(Histogram, DensityOfWeights) {
  const UniformGrid g(0.0, 4.0, 4);
  Vector s(5), w(5);
  s << 0.5, 0.7, 2.2, 3.9, 9.0;
  w << 1.0, 2.0, 0.5, 0.25, 7.0;
  const Vector h = histogram_density(g, s, w);
  EXPECT_DOUBLE_EQ(h(0), 3.0);
  EXPECT_DOUBLE_EQ(h(1), 0.0);
  EXPECT_DOUBLE_EQ(h(2), 0.5);
  EXPECT_DOUBLE_EQ(h(3), 0.25);
}

}  // namespace
}  // namespace pmcphd
