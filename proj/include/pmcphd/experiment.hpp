#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmcphd/ospa.hpp"
#include "pmcphd/phd_filter.hpp"
#include "pmcphd/scenario.hpp"

namespace pmcphd {

/// How the filter's birth intensity is built.
struct BirthSettings {
  /// When true, one component per scheduled target, centred on its initial
  /// pair law; otherwise `components` is used as given.
  bool from_schedule = true;
  double mass_per_target = 0.05;
  double cov_scale = 1.0;  // multiplies the schedule's P0
  std::vector<BirthComponent> components;
};

/// Importance density used for surviving particles.
enum class ProposalKind { Prior, MeasurementMixture };

struct FilterSettings {
  std::size_t particles_per_target = 2000;
  std::size_t birth_particles = 500;
  BirthSettings birth;
  ResamplingScheme resampling = ResamplingScheme::Systematic;
  LikelihoodMode likelihood = LikelihoodMode::Conditional;
  BirthPlacement birth_placement = BirthPlacement::Prior;
  ProposalKind proposal = ProposalKind::Prior;
  double proposal_prior_fraction = 0.5;  // MeasurementMixture only
};

struct ExperimentConfig {
  ScenarioConfig scenario = default_scenario();
  FilterSettings filter;
  OspaParams ospa;
  int runs = 25;
  std::uint64_t seed = 1;
  std::vector<std::string> filters{"pmc", "hmc"};
  std::string output_dir = "pmcphd_out";
  unsigned threads = 0;  // 0 = hardware concurrency

  /// Throws ConfigError.
  void validate() const;
};

/// Filter parameters derived from an experiment configuration.
FilterParams make_filter_params(const ExperimentConfig& cfg);

std::shared_ptr<const Proposal> make_proposal(const FilterSettings& settings);

/// The model a named filter runs with: "pmc" uses the configured cross-feeds,
/// "hmc" the same local model with F2 = 0 and H2 = 0.
GaussianPmcModel filter_model(const ExperimentConfig& cfg, const std::string& filter);

struct StepStats {
  double mean_ospa = 0.0;
  double std_ospa = 0.0;
  double mean_nhat = 0.0;
  double std_nhat = 0.0;
};

struct FilterSummary {
  std::string name;
  std::vector<StepStats> steps;         // index k - 1
  std::vector<double> run_mean_ospa;    // NaN for failed runs
  std::vector<double> run_mean_nhat;    // NaN for failed runs
  std::vector<double> run_seconds;
  std::vector<std::string> failures;    // "run r: message"
  double mean_ospa = 0.0;               // over successful runs and all steps
  int succeeded = 0;
};

struct SummaryReport {
  int runs = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  OspaParams ospa;
  std::vector<int> truth_count;  // alive targets per step
  std::vector<FilterSummary> filters;

  const FilterSummary& filter(const std::string& name) const;
  std::string to_text() const;
};

/// Paired Monte Carlo comparison. Run r uses seed + r for one truth and
/// measurement realization shared by every selected filter, and writes
/// truth.csv, meas.csv, estimates_<f>.csv, metrics_<f>.csv and summary.txt
/// to output_dir. Rows are in (run, step) order whatever the thread count.
SummaryReport run_experiment(const ExperimentConfig& cfg);

/// Per-run filter output, exposed for tests.
struct FilterRun {
  std::vector<double> ospa;
  std::vector<double> nhat;
  std::vector<std::vector<Vector>> estimates;  // positions (H x)
  bool failed = false;
  std::string error;
  double seconds = 0.0;
};

FilterRun run_filter(const ExperimentConfig& cfg, const std::string& filter, const TruthRecord& truth,
                     std::uint64_t seed);

/// Seed-derived stream for one run; identical for every filter in the run.
TruthRecord simulate_run(const ExperimentConfig& cfg, std::uint64_t run_seed);

}  // namespace pmcphd
