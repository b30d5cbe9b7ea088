#include "pmcphd/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "pmcphd/config.hpp"
#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunOutput {
  TruthRecord truth;
  std::vector<FilterRun> filters;
};

std::vector<Vector> positions_of(const std::vector<TruthPoint>& pts, const Matrix& H) {
  std::vector<Vector> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(H * p.pair.x);
  return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) {
    mean = kNaN;
    sd = kNaN;
    return;
  }
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  scenario.validate();
  ospa.validate();
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (filters.empty()) throw ConfigError("filters must name at least one of pmc, hmc");
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (filters[i] != "pmc" && filters[i] != "hmc") throw ConfigError("unknown filter '" + filters[i] + "'");
    for (std::size_t j = 0; j < i; ++j) {
      if (filters[j] == filters[i]) throw ConfigError("filter '" + filters[i] + "' listed twice");
    }
  }
  if (!(filter.proposal_prior_fraction > 0.0 && filter.proposal_prior_fraction <= 1.0)) {
    throw ConfigError("filter.proposal_prior_fraction must lie in (0, 1]");
  }
  if (filter.birth.cov_scale <= 0.0) throw ConfigError("filter.birth.cov_scale must be positive");
  if (filter.birth.mass_per_target < 0.0) throw ConfigError("filter.birth.mass_per_target must be >= 0");
  const Eigen::Index n = scenario.model.state_dim() + scenario.model.obs_dim();
  for (const auto& c : filter.birth.components) {
    if (c.law.dim() != n || c.law.cov.rows() != n || c.law.cov.cols() != n) {
      throw ConfigError("filter.birth.components: laws must live in the pair space");
    }
  }
  make_filter_params(*this).validate();
}

FilterParams make_filter_params(const ExperimentConfig& cfg) {
  const ScenarioConfig& s = cfg.scenario;
  FilterParams p;
  p.p_survival = s.p_survival;
  p.p_detection = s.p_detection;
  p.clutter_rate = s.clutter_rate;
  p.region_volume = s.region.volume();
  p.particles_per_target = cfg.filter.particles_per_target;
  p.birth_particles = cfg.filter.birth_particles;
  p.resampling = cfg.filter.resampling;
  p.likelihood = cfg.filter.likelihood;
  p.birth_placement = cfg.filter.birth_placement;
  if (cfg.filter.birth.from_schedule) {
    for (const auto& t : s.targets) {
      p.birth.components.push_back(
          {cfg.filter.birth.mass_per_target, pair_prior(t.m0, cfg.filter.birth.cov_scale * t.P0, s.model.H, s.model.R)});
    }
  }
  for (const auto& c : cfg.filter.birth.components) p.birth.components.push_back(c);
  return p;
}

GaussianPmcModel filter_model(const ExperimentConfig& cfg, const std::string& filter) {
  HmcSpec spec = cfg.scenario.model;
  if (filter == "hmc") {
    spec.F2.setZero();
    spec.H2.setZero();
  } else if (filter != "pmc") {
    throw ConfigError("unknown filter '" + filter + "'");
  }
  return embed_hmc(spec);
}

TruthRecord simulate_run(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  const RandomStream base(run_seed);
  RandomStream truth_rng = base.split(1);
  RandomStream meas_rng = base.split(2);
  TruthRecord truth = generate_truth(cfg.scenario, truth_rng);
  generate_measurements(truth, cfg.scenario, meas_rng);
  return truth;
}

std::shared_ptr<const Proposal> make_proposal(const FilterSettings& settings) {
  if (settings.proposal == ProposalKind::MeasurementMixture) {
    return std::make_shared<MeasurementMixtureProposal>(settings.proposal_prior_fraction);
  }
  return std::make_shared<PriorProposal>();
}

FilterRun run_filter(const ExperimentConfig& cfg, const std::string& filter, const TruthRecord& truth,
                     std::uint64_t seed) {
  FilterRun out;
  const auto start = std::chrono::steady_clock::now();
  try {
    const Matrix& H = cfg.scenario.model.H;
    PhdFilter phd(filter_model(cfg, filter), make_filter_params(cfg), seed, make_proposal(cfg.filter));
    phd.initialize(0.0);
    for (int k = 1; k <= truth.steps(); ++k) {
      const std::vector<Vector> z = truth.measurement_vectors(k);
      const EstimateSet& est = phd.step(z);
      std::vector<Vector> positions;
      for (const auto& s : est.states) positions.emplace_back(H * s);
      out.ospa.push_back(ospa_distance(positions, positions_of(truth.pairs[static_cast<std::size_t>(k - 1)], H), cfg.ospa));
      out.nhat.push_back(est.cardinality);
      out.estimates.push_back(std::move(positions));
    }
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

const FilterSummary& SummaryReport::filter(const std::string& name) const {
  for (const auto& f : filters) {
    if (f.name == name) return f;
  }
  throw Error("no summary for filter '" + name + "'");
}

std::string SummaryReport::to_text() const {
  std::ostringstream os;
  os << "# experiment summary\n"
     << "# std is the sample standard deviation over successful runs\n"
     << "runs " << runs << "\n"
     << "steps " << steps << "\n"
     << "seed " << seed << "\n"
     << "ospa_cutoff " << format_number(ospa.cutoff) << "\n"
     << "ospa_order " << format_number(ospa.order) << "\n";
  for (const auto& f : filters) {
    os << "\nfilter " << f.name << "\n"
       << "succeeded_runs " << f.succeeded << "\n"
       << "failed_runs " << (runs - f.succeeded) << "\n";
    for (const auto& msg : f.failures) os << "failure " << msg << "\n";
    os << "mean_ospa " << format_number(f.mean_ospa) << "\n";
    os << "# step truth_count mean_ospa std_ospa mean_nhat std_nhat\n";
    for (std::size_t k = 0; k < f.steps.size(); ++k) {
      const auto& s = f.steps[k];
      os << "step " << (k + 1) << ' ' << truth_count[k] << ' ' << format_number(s.mean_ospa) << ' '
         << format_number(s.std_ospa) << ' ' << format_number(s.mean_nhat) << ' ' << format_number(s.std_nhat)
         << "\n";
    }
    os << "# run mean_ospa mean_nhat wall_seconds\n";
    for (std::size_t r = 0; r < f.run_mean_ospa.size(); ++r) {
      os << "run " << r << ' ' << format_number(f.run_mean_ospa[r]) << ' ' << format_number(f.run_mean_nhat[r])
         << ' ' << format_number(f.run_seconds[r]) << "\n";
    }
  }
  return os.str();
}

SummaryReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  for (const auto& f : cfg.filters) (void)filter_model(cfg, f);  // surfaces invalid embeddings up front

  const auto runs = static_cast<std::size_t>(cfg.runs);
  std::vector<RunOutput> results(runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t r = next++; r < runs; r = next++) {
      const std::uint64_t run_seed = cfg.seed + r;
      RunOutput out;
      out.truth = simulate_run(cfg, run_seed);
      // Both filters share one filter stream per run: common random numbers
      // sharpen the paired comparison.
      const std::uint64_t filter_seed = RandomStream(run_seed, 100).seed();
      for (const auto& f : cfg.filters) out.filters.push_back(run_filter(cfg, f, out.truth, filter_seed));
      results[r] = std::move(out);
    }
  };
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, runs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());

  const Eigen::Index m = cfg.scenario.model.state_dim();
  const Eigen::Index q = cfg.scenario.model.obs_dim();
  {
    auto truth_os = open_output(dir / "truth.csv");
    auto meas_os = open_output(dir / "meas.csv");
    write_truth_csv_header(truth_os, m, q);
    write_meas_csv_header(meas_os, q);
    for (std::size_t r = 0; r < runs; ++r) {
      write_truth_csv_rows(truth_os, static_cast<int>(r), results[r].truth);
      write_meas_csv_rows(meas_os, static_cast<int>(r), results[r].truth);
    }
  }

  SummaryReport report;
  report.runs = cfg.runs;
  report.steps = cfg.scenario.steps;
  report.seed = cfg.seed;
  report.ospa = cfg.ospa;
  for (const auto& pts : results.front().truth.pairs) report.truth_count.push_back(static_cast<int>(pts.size()));

  for (std::size_t fi = 0; fi < cfg.filters.size(); ++fi) {
    const std::string& name = cfg.filters[fi];
    auto est_os = open_output(dir / ("estimates_" + name + ".csv"));
    auto met_os = open_output(dir / ("metrics_" + name + ".csv"));
    est_os << "run,step,target,px,py\n";
    met_os << "run,step,ospa,nhat\n";
    FilterSummary fs_;
    fs_.name = name;
    std::vector<std::vector<double>> ospa_by_step(static_cast<std::size_t>(report.steps));
    std::vector<std::vector<double>> nhat_by_step(static_cast<std::size_t>(report.steps));
    std::vector<double> run_means;
    for (std::size_t r = 0; r < runs; ++r) {
      const FilterRun& fr = results[r].filters[fi];
      fs_.run_seconds.push_back(fr.seconds);
      if (fr.failed) {
        fs_.failures.push_back("run " + std::to_string(r) + ": " + fr.error);
        fs_.run_mean_ospa.push_back(kNaN);
        fs_.run_mean_nhat.push_back(kNaN);
        continue;
      }
      ++fs_.succeeded;
      double so = 0.0;
      double sn = 0.0;
      for (std::size_t k = 0; k < fr.ospa.size(); ++k) {
        met_os << r << ',' << (k + 1) << ',' << format_number(fr.ospa[k]) << ',' << format_number(fr.nhat[k]) << '\n';
        for (std::size_t t = 0; t < fr.estimates[k].size(); ++t) {
          const Vector& p = fr.estimates[k][t];
          est_os << r << ',' << (k + 1) << ',' << t;
          for (Eigen::Index d = 0; d < p.size(); ++d) est_os << ',' << format_number(p[d]);
          est_os << '\n';
        }
        ospa_by_step[k].push_back(fr.ospa[k]);
        nhat_by_step[k].push_back(fr.nhat[k]);
        so += fr.ospa[k];
        sn += fr.nhat[k];
      }
      fs_.run_mean_ospa.push_back(so / static_cast<double>(fr.ospa.size()));
      fs_.run_mean_nhat.push_back(sn / static_cast<double>(fr.nhat.size()));
      run_means.push_back(fs_.run_mean_ospa.back());
    }
    for (std::size_t k = 0; k < ospa_by_step.size(); ++k) {
      StepStats s;
      mean_std(ospa_by_step[k], s.mean_ospa, s.std_ospa);
      mean_std(nhat_by_step[k], s.mean_nhat, s.std_nhat);
      fs_.steps.push_back(s);
    }
    double unused;
    mean_std(run_means, fs_.mean_ospa, unused);
    report.filters.push_back(std::move(fs_));
  }

  {
    auto os = open_output(dir / "summary.txt");
    os << report.to_text();
  }
  {
    auto os = open_output(dir / "config_used.json");
    os << serialize_experiment_config(cfg) << "\n";
  }
  return report;
}

}  // namespace pmcphd
