#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "pmcphd/pmcphd.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

int exit_code(pmcphd_status status) {
  if (status == PMCPHD_OK) return kExitOk;
  if (status == PMCPHD_ERR_CONFIG || status == PMCPHD_ERR_INVALID_EMBEDDING) return kExitConfig;
  return kExitFailure;
}

int report_failure(pmcphd_status status) {
  std::cerr << "pmcphd: " << pmcphd_status_name(status) << ": " << pmcphd_last_error() << "\n";
  return exit_code(status);
}

// Fetches a string through the size-then-copy protocol of the C API.
template <class Fn>
pmcphd_status fetch_string(std::string& out, Fn&& fn) {
  size_t needed = 0;
  pmcphd_status st = fn(nullptr, 0, &needed);
  if (st != PMCPHD_OK) return st;
  std::string buf(needed + 1, '\0');
  st = fn(buf.data(), buf.size(), &needed);
  buf.resize(needed);
  out = std::move(buf);
  return st;
}

struct SummaryDeleter {
  void operator()(pmcphd_summary* s) const { pmcphd_summary_destroy(s); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle PHD filtering for pairwise Markov chain models"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int runs = 0;
  std::string out_dir;
  std::string filters;
  int threads = -1;
  bool plot_after = false;

  CLI::App* run = app.add_subcommand("run", "Run the paired Monte Carlo comparison");
  run->add_option("--config", config_path, "JSON experiment configuration (defaults when omitted)")
      ->check(CLI::ExistingFile);
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Base seed; run r uses seed + r");
  run->add_option("--runs", runs, "Number of Monte Carlo runs")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--filters", filters, "Comma-separated subset of pmc,hmc");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  run->add_flag("--plot", plot_after, "Write SVG figures after the run");

  CLI::App* validate = app.add_subcommand("validate", "Check a configuration and report model diagnostics");
  validate->add_option("--config", config_path, "JSON experiment configuration (defaults when omitted)");

  CLI::App* plot = app.add_subcommand("plot", "Render SVG figures from a run's output directory");
  plot->add_option("--out", out_dir, "Output directory of a previous run")->required();

  CLI::App* defaults = app.add_subcommand("default-config", "Print the default configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*run) {
    pmcphd_run_options options;
    pmcphd_run_options_default(&options);
    options.config_path = config_path.empty() ? nullptr : config_path.c_str();
    options.override_seed = seed_opt->count() > 0 ? 1 : 0;
    options.seed = seed;
    options.runs = runs;
    options.output_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    options.filters = filters.empty() ? nullptr : filters.c_str();
    options.threads = threads;
    pmcphd_summary* raw = nullptr;
    pmcphd_status st = pmcphd_run_experiment(&options, &raw);
    if (st != PMCPHD_OK) return report_failure(st);
    std::unique_ptr<pmcphd_summary, SummaryDeleter> summary(raw);

    std::string dir;
    fetch_string(dir, [&](char* b, size_t c, size_t* n) { return pmcphd_summary_output_dir(summary.get(), b, c, n); });
    const size_t nf = pmcphd_summary_filter_count(summary.get());
    bool any_failed = false;
    for (size_t i = 0; i < nf; ++i) {
      std::string name;
      fetch_string(name, [&](char* b, size_t c, size_t* n) { return pmcphd_summary_filter_name(summary.get(), i, b, c, n); });
      double mean = 0.0;
      int ok = 0;
      int failed = 0;
      pmcphd_summary_filter_stats(summary.get(), i, &mean, &ok, &failed);
      std::printf("%s: mean OSPA %.4f over %d runs (%d failed)\n", name.c_str(), mean, ok, failed);
      any_failed = any_failed || failed > 0;
    }
    std::printf("outputs written to %s\n", dir.c_str());
    if (plot_after) {
      std::string written;
      st = fetch_string(written, [&](char* b, size_t c, size_t* n) { return pmcphd_emit_plots(dir.c_str(), b, c, n); });
      if (st != PMCPHD_OK) return report_failure(st);
      std::fputs(written.c_str(), stdout);
    }
    return any_failed ? kExitFailure : kExitOk;
  }

  if (*validate) {
    int valid = 0;
    std::string report;
    const pmcphd_status st = fetch_string(report, [&](char* b, size_t c, size_t* n) {
      return pmcphd_validate_config(config_path.c_str(), &valid, b, c, n);
    });
    if (st != PMCPHD_OK) return report_failure(st);
    std::fputs(report.c_str(), valid ? stdout : stderr);
    return valid ? kExitOk : kExitConfig;
  }

  if (*plot) {
    std::string written;
    const pmcphd_status st =
        fetch_string(written, [&](char* b, size_t c, size_t* n) { return pmcphd_emit_plots(out_dir.c_str(), b, c, n); });
    if (st != PMCPHD_OK) return report_failure(st);
    std::fputs(written.c_str(), stdout);
    return kExitOk;
  }

  if (*defaults) {
    std::string json;
    const pmcphd_status st = fetch_string(json, pmcphd_default_config_json);
    if (st != PMCPHD_OK) return report_failure(st);
    std::printf("%s\n", json.c_str());
    return kExitOk;
  }
  return kExitOk;
}
