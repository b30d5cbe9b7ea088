#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pmcphd/errors.hpp"
#include "pmcphd/pmc_model.hpp"
#include "pmcphd/scenario.hpp"
#include "support/toy_model.hpp"

namespace pmcphd {
namespace {

using test_support::toy_spec;

constexpr double kTwoPi = 2.0 * std::numbers::pi;


Vector random_vector(Eigen::Index n, RandomStream& rng, double scale) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

// Log-density written out with an explicit inverse, independent of the library factorization.
double reference_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Vector r = x - mean;
  const double quad = r.dot(cov.inverse() * r);
  return -0.5 * (x.size() * std::log(kTwoPi) + std::log(cov.determinant()) + quad);
}

TEST(EmbedHmc, DefaultScenarioBlocks) {
  const HmcSpec s = default_scenario().model;
  const GaussianPmcModel model = embed_hmc(s);

  const Matrix sigma11 = s.Q - s.F2 * s.R * s.F2.transpose();
  const Matrix sigma21 = s.H * s.Q - s.H2 * s.R * s.F2.transpose();
  const Matrix sigma22 = s.R - s.H2 * s.R * s.H2.transpose() + s.H * s.Q * s.H.transpose();

  EXPECT_NEAR(model.sigma11()(0, 0), 87.75, 1e-12);
  EXPECT_NEAR(model.sigma11()(2, 2), 87.75, 1e-12);
  EXPECT_NEAR(model.sigma21()(0, 0), 98.25, 1e-12);
  EXPECT_NEAR(model.sigma21()(1, 2), 98.25, 1e-12);
  EXPECT_NEAR((model.sigma22() - 124.75 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_LT((model.sigma11() - sigma11).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((model.sigma21() - sigma21).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((model.sigma22() - sigma22).cwiseAbs().maxCoeff(), 1e-12);

  EXPECT_LT((model.B11() - (s.F - s.F2 * s.H)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(model.B12(), s.F2);
  EXPECT_LT((model.B21() - (s.H * s.F - s.H2 * s.H)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(model.B22(), s.H2);

  const Matrix hp0 = s.H * s.P0;
  EXPECT_EQ(model.init().mean.head(4), s.m0);
  EXPECT_LT((model.init().mean.tail(2) - s.H * s.m0).norm(), 1e-12);
  EXPECT_LT((model.init().cov.bottomLeftCorner(2, 4) - hp0).norm(), 1e-12);
  EXPECT_LT((model.init().cov.bottomRightCorner(2, 2) - (s.R + hp0 * s.H.transpose())).norm(), 1e-12);
}

TEST(EmbedHmc, ZeroCrossFeedsGiveHmcBlocks) {
  const HmcSpec s = test_support::without_cross_feeds(default_scenario().model);
  const GaussianPmcModel model = embed_hmc(s);
  EXPECT_TRUE(model.B12().isZero(0.0));
  EXPECT_TRUE(model.B22().isZero(0.0));
  EXPECT_LT((model.B11() - s.F).norm(), 1e-15);
  EXPECT_LT((model.B21() - s.H * s.F).norm(), 1e-12);
  EXPECT_LT((model.sigma11() - s.Q).norm(), 1e-15);
  EXPECT_LT((model.sigma21() - s.H * s.Q).norm(), 1e-12);
  EXPECT_LT((model.sigma22() - (s.R + s.H * s.Q * s.H.transpose())).norm(), 1e-12);
}

TEST(EmbedHmc, OversizedCrossFeedIsRejected) {
  HmcSpec s = default_scenario().model;
  s.F2 *= 10.0;
  const Matrix reduced = s.Q - s.F2 * s.R * s.F2.transpose();
  ASSERT_LT(Eigen::SelfAdjointEigenSolver<Matrix>(reduced).eigenvalues().minCoeff(), 0.0);
  try {
    embed_hmc(s);
    FAIL() << "expected InvalidEmbeddingError";
  } catch (const InvalidEmbeddingError& e) {
    EXPECT_EQ(e.block(), "Sigma11");
  }
}

TEST(EmbedHmc, DimensionMismatchThrows) {
  HmcSpec s = toy_spec();
  s.R = Matrix::Identity(2, 2);
  EXPECT_THROW(embed_hmc(s), DimensionError);
}

TEST(EmbedHmc, StateBlockMeanPreservesDynamics) {
  const HmcSpec s = default_scenario().model;
  const GaussianPmcModel model = embed_hmc(s);
  RandomStream rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_vector(4, rng, 500.0);
    const Vector mean_x = model.B11() * x + model.B12() * (s.H * x);
    EXPECT_LT((mean_x - s.F * x).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + x.cwiseAbs().maxCoeff()));
  }
}

TEST(PairState, StackRoundTrip) {
  PairState p{Vector::LinSpaced(4, 1.0, 4.0), Vector::LinSpaced(2, 5.0, 6.0)};
  const PairState q = PairState::from_stacked(p.stacked(), 4);
  EXPECT_EQ(q.x, p.x);
  EXPECT_EQ(q.y, p.y);
}

TEST(TransitionSample, NoiselessIdentityKeepsState) {
  GaussianPmcModel model(Matrix::Identity(2, 2), Matrix::Zero(2, 2),
                         Gaussian{Vector::Zero(2), Matrix::Identity(2, 2)}, 1);
  RandomStream rng(1);
  PairState prev{Vector::Constant(1, 3.5), Vector::Constant(1, -1.25)};
  const PairState next = transition_sample(model, prev, rng);
  EXPECT_EQ(next.x(0), 3.5);
  EXPECT_EQ(next.y(0), -1.25);
}

TEST(TransitionSample, NoiselessHmcPropagation) {
  HmcSpec s = test_support::without_cross_feeds(default_scenario().model);
  s.Q.setZero();
  s.R.setZero();
  const GaussianPmcModel model = embed_hmc(s);
  RandomStream rng(2);
  PairState prev{Vector::LinSpaced(4, -100.0, 100.0), Vector::Constant(2, 7.0)};
  const PairState next = transition_sample(model, prev, rng);
  EXPECT_LT((next.x - s.F * prev.x).norm(), 1e-12);
  EXPECT_LT((next.y - s.H * s.F * prev.x).norm(), 1e-9);
}

TEST(TransitionSample, MomentsMatchModel) {
  const GaussianPmcModel model = embed_hmc(default_scenario().model);
  RandomStream rng(77);
  PairState prev{Vector::LinSpaced(4, -50.0, 50.0), Vector::Constant(2, 20.0)};
  const Vector expected_mean = model.B() * prev.stacked();
  const int n = 100000;
  const Eigen::Index d = model.pair_dim();
  Matrix draws(d, n);
  for (int i = 0; i < n; ++i) draws.col(i) = transition_sample(model, prev, rng).stacked();
  const Vector mean = draws.rowwise().mean();
  const Matrix centred = draws.colwise() - mean;
  const Matrix cov = centred * centred.transpose() / (n - 1);
  for (Eigen::Index r = 0; r < d; ++r) {
    const double se = std::sqrt(model.sigma()(r, r) / n);
    EXPECT_LT(std::abs(mean(r) - expected_mean(r)), 3.0 * se) << "component " << r;
    for (Eigen::Index c = 0; c < d; ++c) {
      if (std::abs(model.sigma()(r, c)) < 5.0) continue;
      EXPECT_NEAR(cov(r, c) / model.sigma()(r, c), 1.0, 0.05) << r << "," << c;
    }
  }
}

TEST(TransitionLogpdf, UnitNoiseAtMean) {
  GaussianPmcModel model(Matrix::Identity(6, 6) * 0.5, Matrix::Identity(6, 6),
                         Gaussian{Vector::Zero(6), Matrix::Identity(6, 6)}, 4);
  PairState prev{Vector::LinSpaced(4, 1.0, 4.0), Vector::Constant(2, 2.0)};
  const Vector next = model.B() * prev.stacked();
  EXPECT_NEAR(transition_logpdf(model, PairState::from_stacked(next, 4), prev), -3.0 * std::log(kTwoPi),
              1e-12);
}

TEST(TransitionLogpdf, NormalizesInToyModel) {
  const GaussianPmcModel model = embed_hmc(toy_spec());
  PairState prev{Vector::Constant(1, 0.7), Vector::Constant(1, -0.4)};
  const Vector centre = model.B() * prev.stacked();
  const int n = 600;
  const double half = 9.0;
  const double h = 2.0 * half / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      PairState next{Vector::Constant(1, centre(0) - half + (i + 0.5) * h),
                     Vector::Constant(1, centre(1) - half + (j + 0.5) * h)};
      sum += std::exp(transition_logpdf(model, next, prev));
    }
  }
  EXPECT_NEAR(sum * h * h, 1.0, 1e-6);
}

TEST(TransitionLogpdf, ToyInstanceByHand) {
  const GaussianPmcModel model = embed_hmc(toy_spec());
  PairState prev{Vector::Constant(1, 1.3), Vector::Constant(1, 0.2)};
  PairState next{Vector::Constant(1, 0.4), Vector::Constant(1, 2.1)};
  const double b11 = 0.95 - 0.3, b12 = 0.3, b21 = 0.95 - 0.2, b22 = 0.2;
  const double s11 = 1.0 - 0.3 * 0.5 * 0.3, s21 = 1.0 - 0.2 * 0.5 * 0.3, s22 = 0.5 - 0.2 * 0.5 * 0.2 + 1.0;
  const double rx = 0.4 - (b11 * 1.3 + b12 * 0.2);
  const double ry = 2.1 - (b21 * 1.3 + b22 * 0.2);
  const double det = s11 * s22 - s21 * s21;
  const double quad = (s22 * rx * rx - 2.0 * s21 * rx * ry + s11 * ry * ry) / det;
  const double expected = -std::log(kTwoPi) - 0.5 * std::log(det) - 0.5 * quad;
  EXPECT_NEAR(transition_logpdf(model, next, prev), expected, 1e-12);
}

TEST(TransitionLogpdf, HmcFactorization) {
  const HmcSpec s = test_support::without_cross_feeds(default_scenario().model);
  const GaussianPmcModel model = embed_hmc(s);
  RandomStream rng(123);
  for (int i = 0; i < 100; ++i) {
    PairState prev{random_vector(4, rng, 300.0), random_vector(2, rng, 300.0)};
    PairState next{s.F * prev.x + random_vector(4, rng, 10.0), Vector::Zero(2)};
    next.y = s.H * next.x + random_vector(2, rng, 8.0);
    const double factored =
        reference_logpdf(next.x, s.F * prev.x, s.Q) + reference_logpdf(next.y, s.H * next.x, s.R);
    EXPECT_NEAR(transition_logpdf(model, next, prev), factored, 1e-8);
  }
}

TEST(TransitionLogpdf, TrajectoryFactorization) {
  const GaussianPmcModel model = embed_hmc(toy_spec());
  const Matrix& b = model.B();
  const Matrix& sigma = model.sigma();
  const Matrix p0 = model.init().cov;
  const Matrix p1 = b * p0 * b.transpose() + sigma;
  const Matrix p2 = b * p1 * b.transpose() + sigma;
  Matrix joint(6, 6);
  joint.block(0, 0, 2, 2) = p0;
  joint.block(2, 2, 2, 2) = p1;
  joint.block(4, 4, 2, 2) = p2;
  joint.block(2, 0, 2, 2) = b * p0;
  joint.block(4, 0, 2, 2) = b * b * p0;
  joint.block(4, 2, 2, 2) = b * p1;
  joint.block(0, 2, 2, 2) = joint.block(2, 0, 2, 2).transpose();
  joint.block(0, 4, 2, 2) = joint.block(4, 0, 2, 2).transpose();
  joint.block(2, 4, 2, 2) = joint.block(4, 2, 2, 2).transpose();
  Vector mu(6);
  mu << model.init().mean, b * model.init().mean, b * b * model.init().mean;

  RandomStream rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector xi0 = random_vector(2, rng, 1.5);
    const Vector xi1 = b * xi0 + random_vector(2, rng, 1.0);
    const Vector xi2 = b * xi1 + random_vector(2, rng, 1.0);
    Vector all(6);
    all << xi0, xi1, xi2;
    const auto s0 = PairState::from_stacked(xi0, 1);
    const auto s1 = PairState::from_stacked(xi1, 1);
    const auto s2 = PairState::from_stacked(xi2, 1);
    const double chained =
        mvn_logpdf(xi0, model.init()) + transition_logpdf(model, s1, s0) + transition_logpdf(model, s2, s1);
    EXPECT_NEAR(chained, reference_logpdf(all, mu, joint), 1e-8);
  }
}

TEST(MeasurementLoglik, PredictiveUnitCovariance) {
  Matrix sigma = Matrix::Identity(3, 3);
  GaussianPmcModel model(Matrix::Identity(3, 3) * 0.9, sigma, Gaussian{Vector::Zero(3), sigma}, 1);
  PairState prev{Vector::Constant(1, 2.0), Vector::Constant(2, 1.0)};
  const Vector z = (model.B() * prev.stacked()).tail(2);
  PairState predicted{Vector::Constant(1, 40.0), Vector::Constant(2, -30.0)};
  EXPECT_NEAR(measurement_loglik(model, z, predicted, prev, LikelihoodMode::Predictive), -std::log(kTwoPi),
              1e-14);
}

TEST(MeasurementLoglik, PredictiveDefaultModel) {
  const GaussianPmcModel model = embed_hmc(default_scenario().model);
  PairState prev{Vector::LinSpaced(4, -10.0, 10.0), Vector::Constant(2, 3.0)};
  const Vector z = (model.B() * prev.stacked()).tail(2);
  const double at_mean = measurement_loglik(model, z, prev, prev, LikelihoodMode::Predictive);
  EXPECT_NEAR(at_mean, -std::log(kTwoPi * 124.75), 1e-12);
  EXPECT_NEAR(at_mean, -6.6642, 1e-4);
  Vector shifted = z;
  shifted(1) += std::sqrt(124.75);
  EXPECT_NEAR(measurement_loglik(model, shifted, prev, prev, LikelihoodMode::Predictive), at_mean - 0.5, 1e-12);
}

TEST(MeasurementLoglik, ConditionalEqualsJointOverStateMarginal) {
  const GaussianPmcModel model = embed_hmc(default_scenario().model);
  RandomStream rng(31);
  for (int i = 0; i < 20; ++i) {
    PairState prev{random_vector(4, rng, 400.0), random_vector(2, rng, 400.0)};
    const PairState predicted = transition_sample(model, prev, rng);
    const Vector z = predicted.y + random_vector(2, rng, 15.0);
    const Vector mean = model.B() * prev.stacked();
    Vector joint_point(6);
    joint_point << predicted.x, z;
    const double expected = reference_logpdf(joint_point, mean, model.sigma()) -
                            reference_logpdf(predicted.x, mean.head(4), model.sigma11());
    EXPECT_NEAR(measurement_loglik(model, z, predicted, prev, LikelihoodMode::Conditional), expected, 1e-8);
  }
}

TEST(MeasurementLoglik, ConditionalReducesToObservationModelForHmc) {
  const HmcSpec s = test_support::without_cross_feeds(default_scenario().model);
  const GaussianPmcModel model = embed_hmc(s);
  RandomStream rng(8);
  for (int i = 0; i < 20; ++i) {
    PairState prev{random_vector(4, rng, 400.0), random_vector(2, rng, 400.0)};
    const PairState predicted = transition_sample(model, prev, rng);
    const Vector z = s.H * predicted.x + random_vector(2, rng, 5.0);
    EXPECT_NEAR(measurement_loglik(model, z, predicted, prev, LikelihoodMode::Conditional),
                reference_logpdf(z, s.H * predicted.x, s.R), 1e-8);
  }
}

TEST(ValidateModel, DefaultEmbeddingPasses) {
  const ModelDiagnostics diag = validate_model(embed_hmc(default_scenario().model));
  EXPECT_TRUE(diag.ok()) << diag.to_string();
  ASSERT_EQ(diag.checks.size(), 4u);
  EXPECT_EQ(diag.checks[0].name, "Sigma");
  EXPECT_EQ(diag.checks[3].name, "init.cov");
}

TEST(ValidateModel, NegativeObservationBlockFails) {
  Matrix sigma = Matrix::Identity(3, 3);
  sigma.bottomRightCorner(2, 2) = -Matrix::Identity(2, 2);
  GaussianPmcModel model(Matrix::Identity(3, 3), sigma, Gaussian{Vector::Zero(3), Matrix::Identity(3, 3)}, 1);
  const ModelDiagnostics diag = validate_model(model);
  EXPECT_FALSE(diag.ok());
  for (const CovarianceCheck& c : diag.checks) {
    if (c.name == "Sigma22") {
      EXPECT_FALSE(c.psd);
    }
    if (c.name == "Sigma11" || c.name == "init.cov") {
      EXPECT_TRUE(c.ok());
    }
  }
}

TEST(ValidateModel, AsymmetryIsFlagged) {
  const GaussianPmcModel base = embed_hmc(default_scenario().model);
  Matrix sigma = base.sigma();
  sigma(0, 1) += 1e-3;
  GaussianPmcModel model(base.B(), sigma, base.init(), base.state_dim());
  const ModelDiagnostics diag = validate_model(model);
  EXPECT_FALSE(diag.ok());
  EXPECT_FALSE(diag.checks[0].symmetric);
  EXPECT_GT(diag.checks[0].symmetry_residual, 0.0);
}

TEST(PsdTolerance, RelativeToTrace) {
  Matrix m = Matrix::Identity(2, 2) * 100.0;
  m(1, 1) = -1e-8;
  EXPECT_TRUE(is_psd_within_tolerance(m));
  m(1, 1) = -1e-3;
  EXPECT_FALSE(is_psd_within_tolerance(m));
}

TEST(HmcSpecText, RoundTripExact) {
  const HmcSpec s = default_scenario().model;
  EXPECT_EQ(parse_hmc_spec(serialize_hmc_spec(s)), s);

  RandomStream rng(9);
  HmcSpec r = toy_spec();
  r.F(0, 0) = rng.normal() / 3.0;
  r.Q(0, 0) = std::exp(rng.normal());
  r.R(0, 0) = 1e-300 + std::exp(rng.normal() * 20.0);
  r.m0(0) = -std::numbers::pi * 1e17;
  r.P0(0, 0) = 0.1 + 0.2;
  r.F2(0, 0) = std::nextafter(0.3, 1.0);
  r.H2(0, 0) = 5e-324;
  const HmcSpec back = parse_hmc_spec(serialize_hmc_spec(r));
  EXPECT_EQ(back, r);
}

TEST(HmcSpecText, MalformedInputThrows) {
  EXPECT_THROW(parse_hmc_spec("{\"F\": [[1]]"), Error);
  EXPECT_THROW(parse_hmc_spec("{\"F\": [[1]]}"), Error);
}

}  // namespace
}  // namespace pmcphd
