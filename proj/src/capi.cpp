#include "pmcphd/pmcphd.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "pmcphd/config.hpp"
#include "pmcphd/errors.hpp"
#include "pmcphd/experiment.hpp"
#include "pmcphd/ospa.hpp"
#include "pmcphd/phd_filter.hpp"
#include "pmcphd/plots.hpp"
#include "pmcphd/pmc_model.hpp"

struct pmcphd_model {
  pmcphd::GaussianPmcModel model;
};

struct pmcphd_filter {
  pmcphd::PhdFilter filter;
};

struct pmcphd_summary {
  pmcphd::SummaryReport report;
  std::string output_dir;
};

namespace {

thread_local std::string g_last_error;

pmcphd_status fail(pmcphd_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs body and maps library exceptions to status codes.
template <class Body>
pmcphd_status guarded(Body&& body) {
  try {
    body();
    return PMCPHD_OK;
  } catch (const pmcphd::ConfigError& e) {
    return fail(PMCPHD_ERR_CONFIG, e.what());
  } catch (const pmcphd::InvalidEmbeddingError& e) {
    return fail(PMCPHD_ERR_INVALID_EMBEDDING, std::string(e.what()) + " (block " + e.block() + ")");
  } catch (const pmcphd::SingularCovarianceError& e) {
    return fail(PMCPHD_ERR_SINGULAR, e.what());
  } catch (const pmcphd::NotPsdError& e) {
    return fail(PMCPHD_ERR_NOT_PSD, e.what());
  } catch (const pmcphd::NumericCorruptionError& e) {
    return fail(PMCPHD_ERR_NUMERIC, e.what());
  } catch (const pmcphd::WeightDegeneracyError& e) {
    return fail(PMCPHD_ERR_NUMERIC, e.what());
  } catch (const pmcphd::DimensionError& e) {
    return fail(PMCPHD_ERR_ARGUMENT, e.what());
  } catch (const pmcphd::IoError& e) {
    return fail(PMCPHD_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(PMCPHD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PMCPHD_ERR_INTERNAL, "unknown exception");
  }
}

void copy_out(const std::string& text, char* buf, size_t capacity, size_t* needed) {
  if (needed) *needed = text.size();
  if (buf && capacity > 0) {
    const size_t n = std::min(text.size(), capacity - 1);
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
}

bool string_args_ok(const char* buf, size_t capacity) { return buf != nullptr || capacity == 0; }

pmcphd::FilterParams to_params(const pmcphd_filter_params& p) {
  pmcphd::FilterParams out;
  out.p_survival = p.p_survival;
  out.p_detection = p.p_detection;
  out.particles_per_target = p.particles_per_target;
  out.birth_particles = p.birth_particles;
  out.clutter_rate = p.clutter_rate;
  out.region_volume = p.region_volume;
  switch (p.resampling) {
    case PMCPHD_RESAMPLE_SYSTEMATIC: out.resampling = pmcphd::ResamplingScheme::Systematic; break;
    case PMCPHD_RESAMPLE_MULTINOMIAL: out.resampling = pmcphd::ResamplingScheme::Multinomial; break;
    default: throw pmcphd::ConfigError("unknown resampling scheme " + std::to_string(p.resampling));
  }
  switch (p.likelihood) {
    case PMCPHD_LIKELIHOOD_CONDITIONAL: out.likelihood = pmcphd::LikelihoodMode::Conditional; break;
    case PMCPHD_LIKELIHOOD_PREDICTIVE: out.likelihood = pmcphd::LikelihoodMode::Predictive; break;
    default: throw pmcphd::ConfigError("unknown likelihood mode " + std::to_string(p.likelihood));
  }
  switch (p.birth_placement) {
    case PMCPHD_BIRTH_PRIOR: out.birth_placement = pmcphd::BirthPlacement::Prior; break;
    case PMCPHD_BIRTH_MEASUREMENT: out.birth_placement = pmcphd::BirthPlacement::MeasurementDriven; break;
    default: throw pmcphd::ConfigError("unknown birth placement " + std::to_string(p.birth_placement));
  }
  return out;
}

std::vector<Eigen::VectorXd> point_set(const double* data, size_t n, size_t dim) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    out.push_back(Eigen::Map<const Eigen::VectorXd>(data + i * dim, static_cast<Eigen::Index>(dim)));
  }
  return out;
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

extern "C" {

const char* pmcphd_last_error(void) { return g_last_error.c_str(); }

const char* pmcphd_status_name(pmcphd_status status) {
  switch (status) {
    case PMCPHD_OK: return "ok";
    case PMCPHD_ERR_ARGUMENT: return "invalid argument";
    case PMCPHD_ERR_CONFIG: return "configuration error";
    case PMCPHD_ERR_SINGULAR: return "singular covariance";
    case PMCPHD_ERR_NOT_PSD: return "matrix not positive semidefinite";
    case PMCPHD_ERR_INVALID_EMBEDDING: return "invalid embedding";
    case PMCPHD_ERR_NUMERIC: return "numeric failure";
    case PMCPHD_ERR_IO: return "i/o error";
    case PMCPHD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pmcphd_version(void) { return "1.0.0"; }

pmcphd_status pmcphd_model_from_hmc_json(const char* json, pmcphd_model** out) {
  if (!json || !out) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    const pmcphd::HmcSpec spec = pmcphd::parse_hmc_spec(json);
    *out = new pmcphd_model{pmcphd::embed_hmc(spec)};
  });
}

void pmcphd_model_destroy(pmcphd_model* model) { delete model; }

pmcphd_status pmcphd_model_dims(const pmcphd_model* model, int* state_dim, int* obs_dim) {
  if (!model || !state_dim || !obs_dim) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  *state_dim = static_cast<int>(model->model.state_dim());
  *obs_dim = static_cast<int>(model->model.obs_dim());
  return PMCPHD_OK;
}

pmcphd_status pmcphd_model_matrices(const pmcphd_model* model, double* transition, double* noise_cov) {
  if (!model || !transition || !noise_cov) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  const auto n = model->model.pair_dim();
  Eigen::Map<Eigen::MatrixXd>(transition, n, n) = model->model.B();
  Eigen::Map<Eigen::MatrixXd>(noise_cov, n, n) = model->model.sigma();
  return PMCPHD_OK;
}

pmcphd_status pmcphd_model_validate(const pmcphd_model* model, int* ok, char* report, size_t capacity,
                                    size_t* needed) {
  if (!model || !ok || !string_args_ok(report, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const pmcphd::ModelDiagnostics d = pmcphd::validate_model(model->model);
    *ok = d.ok() ? 1 : 0;
    copy_out(d.to_string(), report, capacity, needed);
  });
}

void pmcphd_filter_params_default(pmcphd_filter_params* params) {
  if (!params) return;
  const pmcphd::FilterParams d;
  params->p_survival = d.p_survival;
  params->p_detection = d.p_detection;
  params->particles_per_target = d.particles_per_target;
  params->birth_particles = d.birth_particles;
  params->clutter_rate = d.clutter_rate;
  params->region_volume = d.region_volume;
  params->resampling = PMCPHD_RESAMPLE_SYSTEMATIC;
  params->likelihood = PMCPHD_LIKELIHOOD_CONDITIONAL;
  params->birth_placement = PMCPHD_BIRTH_PRIOR;
}

pmcphd_status pmcphd_filter_create(const pmcphd_model* model, const pmcphd_filter_params* params,
                                   size_t birth_count, const double* birth_masses, const double* birth_means,
                                   const double* birth_covs, uint64_t seed, pmcphd_filter** out) {
  if (!model || !params || !out) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  if (birth_count > 0 && (!birth_masses || !birth_means || !birth_covs)) {
    return fail(PMCPHD_ERR_ARGUMENT, "birth arrays are required when birth_count > 0");
  }
  *out = nullptr;
  return guarded([&] {
    pmcphd::FilterParams p = to_params(*params);
    const auto d = model->model.pair_dim();
    for (size_t c = 0; c < birth_count; ++c) {
      pmcphd::BirthComponent comp;
      comp.mass = birth_masses[c];
      comp.law.mean = Eigen::Map<const Eigen::VectorXd>(birth_means + c * static_cast<size_t>(d), d);
      comp.law.cov = Eigen::Map<const Eigen::MatrixXd>(birth_covs + c * static_cast<size_t>(d * d), d, d);
      p.birth.components.push_back(std::move(comp));
    }
    p.validate();
    *out = new pmcphd_filter{pmcphd::PhdFilter(model->model, std::move(p), seed)};
  });
}

void pmcphd_filter_destroy(pmcphd_filter* filter) { delete filter; }

pmcphd_status pmcphd_filter_initialize(pmcphd_filter* filter, double expected_targets) {
  if (!filter) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] { filter->filter.initialize(expected_targets); });
}

pmcphd_status pmcphd_filter_step(pmcphd_filter* filter, const double* measurements, size_t count) {
  if (!filter || (count > 0 && !measurements)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto q = filter->filter.model().obs_dim();
    const std::vector<Eigen::VectorXd> z = point_set(measurements, count, static_cast<size_t>(q));
    filter->filter.step(z);
  });
}

pmcphd_status pmcphd_filter_estimates(const pmcphd_filter* filter, double* states, size_t capacity, size_t* count,
                                      double* cardinality) {
  if (!filter || !count || (capacity > 0 && !states)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  const pmcphd::EstimateSet& e = filter->filter.estimates();
  const auto m = static_cast<size_t>(filter->filter.model().state_dim());
  *count = e.states.size();
  if (cardinality) *cardinality = e.cardinality;
  for (size_t i = 0; i < std::min(capacity, e.states.size()); ++i) {
    Eigen::Map<Eigen::VectorXd>(states + i * m, static_cast<Eigen::Index>(m)) = e.states[i];
  }
  return PMCPHD_OK;
}

pmcphd_status pmcphd_filter_cloud_size(const pmcphd_filter* filter, size_t* particles, double* mass) {
  if (!filter || !particles || !mass) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  *particles = static_cast<size_t>(filter->filter.cloud().size());
  *mass = filter->filter.cloud().mass();
  return PMCPHD_OK;
}

pmcphd_status pmcphd_ospa(const double* x, size_t nx, const double* y, size_t ny, size_t dim, double cutoff,
                          double order, double* distance) {
  if (!distance || (nx > 0 && !x) || (ny > 0 && !y) || dim == 0) return fail(PMCPHD_ERR_ARGUMENT, "bad argument");
  return guarded([&] {
    pmcphd::OspaParams p{cutoff, order};
    p.validate();
    *distance = pmcphd::ospa_distance(point_set(x, nx, dim), point_set(y, ny, dim), p);
  });
}

void pmcphd_run_options_default(pmcphd_run_options* options) {
  if (!options) return;
  options->config_path = nullptr;
  options->override_seed = 0;
  options->seed = 0;
  options->runs = 0;
  options->output_dir = nullptr;
  options->filters = nullptr;
  options->threads = -1;
}

pmcphd_status pmcphd_run_experiment(const pmcphd_run_options* options, pmcphd_summary** out) {
  if (!options || !out) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    pmcphd::ExperimentConfig cfg;
    if (options->config_path && *options->config_path) cfg = pmcphd::load_experiment_config(options->config_path);
    if (options->override_seed) cfg.seed = options->seed;
    if (options->runs > 0) cfg.runs = options->runs;
    if (options->output_dir) cfg.output_dir = options->output_dir;
    if (options->filters) cfg.filters = split_names(options->filters);
    if (options->threads >= 0) cfg.threads = static_cast<unsigned>(options->threads);
    cfg.validate();
    auto summary = std::make_unique<pmcphd_summary>();
    summary->report = pmcphd::run_experiment(cfg);
    summary->output_dir = cfg.output_dir;
    *out = summary.release();
  });
}

void pmcphd_summary_destroy(pmcphd_summary* summary) { delete summary; }

pmcphd_status pmcphd_summary_text(const pmcphd_summary* summary, char* buf, size_t capacity, size_t* needed) {
  if (!summary || !string_args_ok(buf, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] { copy_out(summary->report.to_text(), buf, capacity, needed); });
}

pmcphd_status pmcphd_summary_output_dir(const pmcphd_summary* summary, char* buf, size_t capacity,
                                        size_t* needed) {
  if (!summary || !string_args_ok(buf, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  copy_out(summary->output_dir, buf, capacity, needed);
  return PMCPHD_OK;
}

size_t pmcphd_summary_filter_count(const pmcphd_summary* summary) {
  return summary ? summary->report.filters.size() : 0;
}

pmcphd_status pmcphd_summary_filter_name(const pmcphd_summary* summary, size_t index, char* buf, size_t capacity,
                                         size_t* needed) {
  if (!summary || !string_args_ok(buf, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  if (index >= summary->report.filters.size()) return fail(PMCPHD_ERR_ARGUMENT, "filter index out of range");
  copy_out(summary->report.filters[index].name, buf, capacity, needed);
  return PMCPHD_OK;
}

pmcphd_status pmcphd_summary_filter_stats(const pmcphd_summary* summary, size_t index, double* mean_ospa,
                                          int* succeeded_runs, int* failed_runs) {
  if (!summary) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  if (index >= summary->report.filters.size()) return fail(PMCPHD_ERR_ARGUMENT, "filter index out of range");
  const pmcphd::FilterSummary& f = summary->report.filters[index];
  if (mean_ospa) *mean_ospa = f.mean_ospa;
  if (succeeded_runs) *succeeded_runs = f.succeeded;
  if (failed_runs) *failed_runs = summary->report.runs - f.succeeded;
  return PMCPHD_OK;
}

pmcphd_status pmcphd_validate_config(const char* path, int* valid, char* report, size_t capacity,
                                     size_t* needed) {
  if (!valid || !string_args_ok(report, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const pmcphd::ConfigDiagnostics d = pmcphd::validate_config_file(path ? path : "");
    *valid = d.valid ? 1 : 0;
    copy_out(d.report, report, capacity, needed);
  });
}

pmcphd_status pmcphd_emit_plots(const char* output_dir, char* written, size_t capacity, size_t* needed) {
  if (!output_dir || !string_args_ok(written, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    std::string list;
    for (const std::string& f : pmcphd::emit_plots(output_dir)) list += f + "\n";
    copy_out(list, written, capacity, needed);
  });
}

pmcphd_status pmcphd_default_config_json(char* buf, size_t capacity, size_t* needed) {
  if (!string_args_ok(buf, capacity)) return fail(PMCPHD_ERR_ARGUMENT, "null argument");
  return guarded([&] { copy_out(pmcphd::serialize_experiment_config(pmcphd::ExperimentConfig{}), buf, capacity, needed); });
}

}  // extern "C"
