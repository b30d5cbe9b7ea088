#pragma once

#include <iosfwd>
#include <vector>

#include "pmcphd/pmc_model.hpp"
#include "pmcphd/random.hpp"

namespace pmcphd {

/// Axis-aligned box in measurement space.
struct Region {
  Vector lower;
  Vector upper;

  double volume() const;
  bool contains(const Vector& z) const;
};

struct TargetSchedule {
  int id = 0;
  int birth_step = 1;
  int death_step = 0;  // last step alive, inclusive
  Vector m0;           // initial state mean
  Matrix P0;           // initial state covariance

  bool alive(int step) const { return step >= birth_step && step <= death_step; }
};

struct ScenarioConfig {
  double turn_rate = 0.0;  // rad per time unit
  double period = 1.0;
  int steps = 50;
  Region region;
  double clutter_rate = 10.0;
  double p_detection = 0.9;
  double p_survival = 0.98;
  std::vector<TargetSchedule> targets;
  HmcSpec model;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// Coordinated-turn transition for the state [px, vx, py, vy]; falls back to
/// the constant-velocity limit for |omega| < 1e-8.
Matrix coordinated_turn_matrix(double omega, double period);

/// Comparative experiment defaults: four targets, coordinated-turn dynamics,
/// position observations, 10 uniform clutter points per scan.
ScenarioConfig default_scenario();

struct TruthPoint {
  int target = 0;
  PairState pair;
};

/// A reported measurement; source is the target id or kClutter.
struct Measurement {
  static constexpr int kClutter = -1;
  Vector z;
  int source = kClutter;
};

/// Per-step ground truth; index k - 1 holds step k.
struct TruthRecord {
  std::vector<std::vector<TruthPoint>> pairs;
  std::vector<std::vector<Measurement>> measurements;

  int steps() const { return static_cast<int>(pairs.size()); }
  std::vector<Vector> measurement_vectors(int step) const;
};

/// Pair trajectories of every scheduled target under the embedded model.
/// Target lifetimes follow the schedule.
TruthRecord generate_truth(const ScenarioConfig& cfg, RandomStream& rng);

/// Detection thinning plus Poisson clutter, uniformly placed in the region,
/// shuffled per step. Fills truth.measurements.
void generate_measurements(TruthRecord& truth, const ScenarioConfig& cfg, RandomStream& rng);

/// Shortest round-trip decimal text, independent of the global locale.
std::string format_number(double v);

void write_truth_csv_header(std::ostream& os, Eigen::Index state_dim, Eigen::Index obs_dim);
void write_truth_csv_rows(std::ostream& os, int run, const TruthRecord& truth);
void write_meas_csv_header(std::ostream& os, Eigen::Index obs_dim);
void write_meas_csv_rows(std::ostream& os, int run, const TruthRecord& truth);

}  // namespace pmcphd
