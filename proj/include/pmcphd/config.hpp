#pragma once

#include <string>

#include "pmcphd/experiment.hpp"

namespace pmcphd {

/// Parses a JSON experiment configuration. Missing keys take the defaults of
/// ExperimentConfig{}; unknown keys are rejected. Syntax errors report the
/// line and column. Throws ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string serialize_experiment_config(const ExperimentConfig& cfg);

struct ConfigDiagnostics {
  bool valid = false;
  std::string report;
};

/// Parses the file, checks ranges, embeds the model and reports its
/// covariance diagnostics and the effective parameters. An empty path checks
/// the built-in defaults.
ConfigDiagnostics validate_config_file(const std::string& path);

}  // namespace pmcphd
