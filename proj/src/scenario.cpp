#include "pmcphd/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "pmcphd/errors.hpp"

namespace pmcphd {

double Region::volume() const {
  if (lower.size() != upper.size() || lower.size() == 0) return 0.0;
  return (upper - lower).prod();
}

bool Region::contains(const Vector& z) const {
  return z.size() == lower.size() && (z.array() >= lower.array()).all() && (z.array() <= upper.array()).all();
}

void ScenarioConfig::validate() const {
  model.check_dimensions();
  if (steps < 1) throw ConfigError("scenario.steps must be >= 1");
  if (!(period > 0.0)) throw ConfigError("scenario.T must be positive");
  if (region.lower.size() != model.obs_dim() || region.upper.size() != model.obs_dim()) {
    throw ConfigError("scenario.region must have the measurement dimension");
  }
  if (!((region.upper.array() > region.lower.array()).all())) throw ConfigError("scenario.region has non-positive volume");
  if (!(clutter_rate >= 0.0) || !std::isfinite(clutter_rate)) throw ConfigError("scenario.clutter_rate must be >= 0");
  if (!(p_detection >= 0.0 && p_detection <= 1.0)) throw ConfigError("scenario.p_D must lie in [0, 1]");
  if (!(p_survival >= 0.0 && p_survival <= 1.0)) throw ConfigError("scenario.p_S must lie in [0, 1]");
  for (const auto& t : targets) {
    if (t.birth_step < 1 || t.birth_step > t.death_step || t.death_step > steps) {
      throw ConfigError("target " + std::to_string(t.id) + ": need 1 <= birth <= death <= steps");
    }
    if (t.m0.size() != model.state_dim() || t.P0.rows() != model.state_dim() || t.P0.cols() != model.state_dim()) {
      throw ConfigError("target " + std::to_string(t.id) + ": initial law has wrong dimension");
    }
  }
}

Matrix coordinated_turn_matrix(double omega, double period) {
  const double wt = omega * period;
  double s_over_w;   // sin(wT) / w
  double c_over_w;   // (1 - cos(wT)) / w
  if (std::abs(omega) < 1e-8) {
    s_over_w = period;
    c_over_w = 0.0;
  } else {
    s_over_w = std::sin(wt) / omega;
    c_over_w = (1.0 - std::cos(wt)) / omega;
  }
  const double c = std::cos(wt);
  const double s = std::sin(wt);
  Matrix f(4, 4);
  f << 1, s_over_w, 0, -c_over_w,
       0, c, 0, -s,
       0, c_over_w, 1, s_over_w,
       0, s, 0, c;
  if (std::abs(omega) < 1e-8) {
    f(1, 1) = 1.0;
    f(3, 3) = 1.0;
    f(1, 3) = 0.0;
    f(3, 1) = 0.0;
  }
  return f;
}

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.turn_rate = std::numbers::pi / 36.0;
  cfg.period = 1.0;
  cfg.steps = 50;
  cfg.region.lower = Vector::Constant(2, -2000.0);
  cfg.region.upper = Vector::Constant(2, 2000.0);
  cfg.clutter_rate = 10.0;
  cfg.p_detection = 0.9;
  cfg.p_survival = 0.98;

  HmcSpec& s = cfg.model;
  s.F = coordinated_turn_matrix(cfg.turn_rate, cfg.period);
  s.F2 = Matrix::Zero(4, 2);
  s.F2(0, 0) = 0.7;
  s.F2(2, 1) = 0.7;
  s.H = Matrix::Zero(2, 4);
  s.H(0, 0) = 1.0;
  s.H(1, 2) = 1.0;
  s.H2 = 0.1 * Matrix::Identity(2, 2);
  s.Q.resize(4, 4);
  s.Q << 100, 1, 0, 0,
         1, 10, 0, 0,
         0, 0, 100, 1,
         0, 0, 1, 10;
  s.R = 25.0 * Matrix::Identity(2, 2);
  s.m0 = Vector::Zero(4);
  Vector p0_diag(4);
  p0_diag << 100, 25, 100, 25;
  s.P0 = p0_diag.asDiagonal();

  struct Start {
    double px, py, vx, vy;
    int birth;
  };
  const Start starts[] = {
      {-1000.0, -500.0, 10.0, 10.0, 1},
      {800.0, -800.0, -10.0, 10.0, 1},
      {-800.0, 900.0, 10.0, -10.0, 20},
      {900.0, 700.0, -10.0, -10.0, 20},
  };
  int id = 1;
  for (const auto& st : starts) {
    TargetSchedule t;
    t.id = id++;
    t.birth_step = st.birth;
    t.death_step = cfg.steps;
    t.m0.resize(4);
    t.m0 << st.px, st.vx, st.py, st.vy;
    t.P0 = s.P0;
    cfg.targets.push_back(std::move(t));
  }
  return cfg;
}

std::vector<Vector> TruthRecord::measurement_vectors(int step) const {
  std::vector<Vector> out;
  for (const auto& m : measurements.at(static_cast<std::size_t>(step - 1))) out.push_back(m.z);
  return out;
}

TruthRecord generate_truth(const ScenarioConfig& cfg, RandomStream& rng) {
  cfg.validate();
  const GaussianPmcModel model = embed_hmc(cfg.model);
  TruthRecord truth;
  truth.pairs.resize(static_cast<std::size_t>(cfg.steps));
  truth.measurements.resize(static_cast<std::size_t>(cfg.steps));
  for (const auto& t : cfg.targets) {
    RandomStream target_rng = rng.split(static_cast<std::uint64_t>(t.id));
    const Gaussian prior = pair_prior(t.m0, t.P0, cfg.model.H, cfg.model.R);
    PairState state = PairState::from_stacked(mvn_sample(prior, target_rng), model.state_dim());
    for (int k = t.birth_step; k <= t.death_step; ++k) {
      if (k > t.birth_step) state = transition_sample(model, state, target_rng);
      truth.pairs[static_cast<std::size_t>(k - 1)].push_back({t.id, state});
    }
  }
  return truth;
}

void generate_measurements(TruthRecord& truth, const ScenarioConfig& cfg, RandomStream& rng) {
  const Eigen::Index q = cfg.model.obs_dim();
  truth.measurements.assign(truth.pairs.size(), {});
  for (std::size_t k = 0; k < truth.pairs.size(); ++k) {
    auto& z = truth.measurements[k];
    for (const auto& p : truth.pairs[k]) {
      if (rng.uniform() < cfg.p_detection) z.push_back({p.pair.y, p.target});
    }
    const std::uint64_t clutter = rng.poisson(cfg.clutter_rate);
    for (std::uint64_t c = 0; c < clutter; ++c) {
      Vector point(q);
      for (Eigen::Index d = 0; d < q; ++d) point[d] = rng.uniform(cfg.region.lower[d], cfg.region.upper[d]);
      z.push_back({std::move(point), Measurement::kClutter});
    }
    // Fisher-Yates with the stream's own draws, so the order is reproducible.
    for (std::size_t i = z.size(); i > 1; --i) std::swap(z[i - 1], z[rng.index(i)]);
  }
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void write_vector(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_number(v[i]);
}

}  // namespace

void write_truth_csv_header(std::ostream& os, Eigen::Index m, Eigen::Index q) {
  os << "run,step,target";
  if (m == 4 && q == 2) {
    os << ",px,vx,py,vy,yx,yy\n";
    return;
  }
  for (Eigen::Index i = 0; i < m; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < q; ++i) os << ",y" << i;
  os << '\n';
}

void write_truth_csv_rows(std::ostream& os, int run, const TruthRecord& truth) {
  for (std::size_t k = 0; k < truth.pairs.size(); ++k) {
    for (const auto& p : truth.pairs[k]) {
      os << run << ',' << (k + 1) << ',' << p.target;
      write_vector(os, p.pair.x);
      write_vector(os, p.pair.y);
      os << '\n';
    }
  }
}

void write_meas_csv_header(std::ostream& os, Eigen::Index q) {
  os << "run,step";
  if (q == 2) {
    os << ",zx,zy";
  } else {
    for (Eigen::Index i = 0; i < q; ++i) os << ",z" << i;
  }
  os << ",provenance\n";
}

void write_meas_csv_rows(std::ostream& os, int run, const TruthRecord& truth) {
  for (std::size_t k = 0; k < truth.measurements.size(); ++k) {
    for (const auto& m : truth.measurements[k]) {
      os << run << ',' << (k + 1);
      write_vector(os, m.z);
      os << ',';
      if (m.source == Measurement::kClutter) {
        os << "clutter";
      } else {
        os << m.source;
      }
      os << '\n';
    }
  }
}

}  // namespace pmcphd
