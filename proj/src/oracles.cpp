#include "pmcphd/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

Matrix solve_spd(const Matrix& a, const Matrix& rhs, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success || min_eigenvalue(a) <= 0.0) {
    throw SingularCovarianceError(std::string(what) + " is singular");
  }
  return llt.solve(rhs);
}

PmcKalmanState condition(const Vector& mean_x, const Vector& mean_y, const Matrix& cxx, const Matrix& cxy,
                         const Matrix& cyy, const Vector& z) {
  const Matrix gain = cxy.isZero(0.0) && cyy.isZero(0.0)
                          ? Matrix::Zero(cxy.rows(), cxy.cols())
                          : Matrix(solve_spd(cyy, cxy.transpose(), "innovation covariance").transpose());
  PmcKalmanState out;
  out.mean = mean_x + gain * (z - mean_y);
  out.cov = cxx - gain * cxy.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.last_y = z;
  return out;
}

void require_1d(const GaussianPmcModel& model) {
  if (model.state_dim() != 1 || model.obs_dim() != 1) {
    throw DimensionError("grid oracle requires a model with one state and one observation dimension");
  }
}

}  // namespace

PmcKalmanState pmc_kalman_init(const GaussianPmcModel& model, const Vector& y0) {
  const auto m = model.state_dim();
  const auto q = model.obs_dim();
  if (y0.size() != q) throw DimensionError("pmc_kalman_init: observation dimension mismatch");
  const Gaussian& g = model.init();
  return condition(g.mean.head(m), g.mean.tail(q), g.cov.topLeftCorner(m, m), g.cov.topRightCorner(m, q),
                   g.cov.bottomRightCorner(q, q), y0);
}

PmcKalmanState pmc_kalman_step(const PmcKalmanState& state, const GaussianPmcModel& model, const Vector& z) {
  const auto m = model.state_dim();
  const auto q = model.obs_dim();
  if (state.mean.size() != m || state.cov.rows() != m || state.last_y.size() != q || z.size() != q) {
    throw DimensionError("pmc_kalman_step: dimension mismatch");
  }
  const Matrix b11 = model.B11();
  const Matrix b21 = model.B21();
  const Vector mean_x = b11 * state.mean + model.B12() * state.last_y;
  const Vector mean_y = b21 * state.mean + model.B22() * state.last_y;
  const Matrix cxx = b11 * state.cov * b11.transpose() + model.sigma11();
  const Matrix cxy = b11 * state.cov * b21.transpose() + model.sigma21().transpose();
  const Matrix cyy = b21 * state.cov * b21.transpose() + model.sigma22();
  return condition(mean_x, mean_y, cxx, cxy, cyy, z);
}

UniformGrid::UniformGrid(double lower, double upper, int cells) : min(lower), count(cells) {
  if (!(upper > lower) || cells <= 0) throw DimensionError("UniformGrid: empty range or non-positive cell count");
  spacing = (upper - lower) / cells;
}

int UniformGrid::cell_of(double v) const {
  if (!(v >= min) || !(v < max())) return -1;
  const int i = static_cast<int>(std::floor((v - min) / spacing));
  return std::clamp(i, 0, count - 1);
}

GridIntensity::GridIntensity(UniformGrid xg, UniformGrid yg)
    : x(xg), y(yg), values(Matrix::Zero(xg.count, yg.count)) {}

double GridIntensity::mass() const { return values.sum() * x.spacing * y.spacing; }

Vector GridIntensity::x_marginal() const { return values.rowwise().sum() * y.spacing; }

GridIntensity grid_density(const UniformGrid& x, const UniformGrid& y, const Gaussian& law, double mass) {
  if (law.dim() != 2) throw DimensionError("grid_density: law must be two-dimensional");
  GridIntensity g(x, y);
  const GaussianDensity density(law.cov);
  Vector r(2);
  for (int i = 0; i < x.count; ++i) {
    for (int j = 0; j < y.count; ++j) {
      r << x.center(i) - law.mean(0), y.center(j) - law.mean(1);
      g.values(i, j) = mass * std::exp(density.log_density(r));
    }
  }
  return g;
}

GridIntensity grid_phd_predict(const GridIntensity& v, const GaussianPmcModel& model, double p_survival,
                               const GridIntensity& birth) {
  require_1d(model);
  if (!(v.x == birth.x) || !(v.y == birth.y)) throw DimensionError("grid_phd_predict: grids differ");
  const UniformGrid& gx = v.x;
  const UniformGrid& gy = v.y;
  const double hx = gx.spacing;
  const double hy = gy.spacing;
  const Matrix& b = model.B();
  const GaussianDensity noise(model.sigma());

  // Surviving cell masses moved to their transition means, spread bilinearly
  // over the four neighbouring cell centres.
  Matrix moved = Matrix::Zero(gx.count, gy.count);
  for (int i = 0; i < gx.count; ++i) {
    for (int j = 0; j < gy.count; ++j) {
      const double cell_mass = p_survival * v.values(i, j) * hx * hy;
      if (cell_mass == 0.0) continue;
      const double xs = gx.center(i);
      const double ys = gy.center(j);
      const double u = (b(0, 0) * xs + b(0, 1) * ys - gx.min) / hx - 0.5;
      const double w = (b(1, 0) * xs + b(1, 1) * ys - gy.min) / hy - 0.5;
      const int i0 = static_cast<int>(std::floor(u));
      const int j0 = static_cast<int>(std::floor(w));
      const double tu = u - i0;
      const double tw = w - j0;
      const double share[2][2] = {{(1 - tu) * (1 - tw), (1 - tu) * tw}, {tu * (1 - tw), tu * tw}};
      for (int a = 0; a < 2; ++a) {
        for (int c = 0; c < 2; ++c) {
          const int ii = i0 + a;
          const int jj = j0 + c;
          if (ii >= 0 && ii < gx.count && jj >= 0 && jj < gy.count) moved(ii, jj) += share[a][c] * cell_mass;
        }
      }
    }
  }

  // Transition noise kernel on cell offsets, truncated at 8 standard deviations.
  const int rx = static_cast<int>(std::ceil(8.0 * std::sqrt(model.sigma()(0, 0)) / hx));
  const int ry = static_cast<int>(std::ceil(8.0 * std::sqrt(model.sigma()(1, 1)) / hy));
  const double peak = std::exp(-noise.log_normalizer());
  struct KernelRow {
    int di;
    int dj_begin;
    std::vector<double> values;
  };
  std::vector<KernelRow> kernel;
  Vector r(2);
  for (int di = -rx; di <= rx; ++di) {
    KernelRow row{di, 0, {}};
    int first = ry + 1;
    std::vector<double> vals;
    for (int dj = -ry; dj <= ry; ++dj) {
      r << di * hx, dj * hy;
      const double k = std::exp(noise.log_density(r));
      if (k > 1e-16 * peak) {
        if (first > ry) first = dj;
        vals.resize(static_cast<std::size_t>(dj - first + 1), 0.0);
        vals.back() = k;
      }
    }
    if (vals.empty()) continue;
    row.dj_begin = first;
    row.values = std::move(vals);
    kernel.push_back(std::move(row));
  }

  GridIntensity out = birth;
  const double threshold = 1e-14 * moved.maxCoeff();
  for (int i = 0; i < gx.count; ++i) {
    for (int j = 0; j < gy.count; ++j) {
      const double cell_mass = moved(i, j);
      if (cell_mass <= threshold) continue;
      for (const KernelRow& row : kernel) {
        const int ii = i + row.di;
        if (ii < 0 || ii >= gx.count) continue;
        const int n = static_cast<int>(row.values.size());
        const int jb = std::max(0, j + row.dj_begin);
        const int je = std::min(gy.count, j + row.dj_begin + n);
        for (int jj = jb; jj < je; ++jj) {
          out.values(ii, jj) += cell_mass * row.values[static_cast<std::size_t>(jj - j - row.dj_begin)];
        }
      }
    }
  }
  return out;
}

GridIntensity grid_phd_update(const GridIntensity& v_pred, const GaussianPmcModel& model, double p_detection,
                              double clutter_intensity, const std::vector<double>& measurements) {
  require_1d(model);
  const UniformGrid& gx = v_pred.x;
  const UniformGrid& gy = v_pred.y;
  GridIntensity out = v_pred;
  out.values *= (1.0 - p_detection);
  for (double z : measurements) {
    const int cell = gy.cell_of(z);
    if (cell < 0) throw Error("grid_phd_update: measurement " + std::to_string(z) + " outside the y grid");
    // Linear interpolation between the two cell centres that bracket z.
    const double t = (z - gy.min) / gy.spacing - 0.5;
    int j0 = static_cast<int>(std::floor(t));
    double frac = t - j0;
    if (j0 < 0) {
      j0 = 0;
      frac = 0.0;
    } else if (j0 >= gy.count - 1) {
      j0 = gy.count - 2;
      frac = 1.0;
    }
    const Vector at_z = (1.0 - frac) * v_pred.values.col(j0) + frac * v_pred.values.col(j0 + 1);
    const double denominator = clutter_intensity + p_detection * at_z.sum() * gx.spacing;
    if (denominator <= 0.0) continue;
    out.values.col(cell) += (p_detection / (denominator * gy.spacing)) * at_z;
  }
  return out;
}

Vector histogram_density(const UniformGrid& grid, const Vector& samples, const Vector& weights) {
  if (samples.size() != weights.size()) throw DimensionError("histogram_density: size mismatch");
  Vector h = Vector::Zero(grid.count);
  for (Eigen::Index n = 0; n < samples.size(); ++n) {
    const int c = grid.cell_of(samples(n));
    if (c >= 0) h(c) += weights(n);
  }
  return h / grid.spacing;
}

}  // namespace pmcphd
