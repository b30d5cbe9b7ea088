#pragma once

#include <vector>

#include "pmcphd/gaussian.hpp"
#include "pmcphd/pmc_model.hpp"

namespace pmcphd {

/// Posterior of x_k given y_{0:k} for a single, always-detected target.
struct PmcKalmanState {
  Vector mean;
  Matrix cov;
  Vector last_y;
};

/// Conditions the model's initial pair law on the first observation y0.
PmcKalmanState pmc_kalman_init(const GaussianPmcModel& model, const Vector& y0);

/// One exact filtering step of the linear Gaussian PMC.
/// An observation with zero innovation and cross covariance leaves the state
/// unchanged; any other singular innovation covariance throws
/// SingularCovarianceError.
PmcKalmanState pmc_kalman_step(const PmcKalmanState& state, const GaussianPmcModel& model, const Vector& z);

/// Uniform cell-centred 1-D grid: cell i covers [min + i h, min + (i + 1) h).
struct UniformGrid {
  double min = 0.0;
  double spacing = 1.0;
  int count = 0;

  UniformGrid() = default;
  UniformGrid(double lower, double upper, int cells);

  double center(int i) const { return min + (i + 0.5) * spacing; }
  double max() const { return min + count * spacing; }
  /// Index of the cell containing v, or -1 outside the grid.
  int cell_of(double v) const;
  bool operator==(const UniformGrid& o) const {
    return min == o.min && spacing == o.spacing && count == o.count;
  }
};

/// Joint intensity v(x, y) on a 2-D grid (m = q = 1); values(i, j) is the
/// density at (x.center(i), y.center(j)).
struct GridIntensity {
  UniformGrid x;
  UniformGrid y;
  Matrix values;

  GridIntensity() = default;
  GridIntensity(UniformGrid xg, UniformGrid yg);

  double mass() const;
  /// Density of the x-marginal at each x cell centre.
  Vector x_marginal() const;
};

/// mass * N((x, y); law) sampled at the cell centres.
GridIntensity grid_density(const UniformGrid& x, const UniformGrid& y, const Gaussian& law, double mass);

/// Prediction of the joint intensity by midpoint quadrature plus birth.
/// Throws DimensionError for m != 1, q != 1 or mismatched grids.
GridIntensity grid_phd_predict(const GridIntensity& v, const GaussianPmcModel& model, double p_survival,
                               const GridIntensity& birth);

/// Measurement update with each z realized as one y cell.
/// Throws Error when some z lies outside the y grid.
GridIntensity grid_phd_update(const GridIntensity& v_pred, const GaussianPmcModel& model, double p_detection,
                              double clutter_intensity, const std::vector<double>& measurements);

/// Weighted histogram of x samples on grid cells, as a density (weight / spacing).
Vector histogram_density(const UniformGrid& grid, const Vector& samples, const Vector& weights);

}  // namespace pmcphd
