/* Public C interface of the pmcphd shared library. */
#ifndef PMCPHD_PMCPHD_H
#define PMCPHD_PMCPHD_H

#include <stddef.h>
#include <stdint.h>

#if defined(PMCPHD_BUILDING_LIBRARY)
#define PMCPHD_API __attribute__((visibility("default")))
#else
#define PMCPHD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pmcphd_status {
  PMCPHD_OK = 0,
  PMCPHD_ERR_ARGUMENT = 1,          /* null pointer, bad size or dimension */
  PMCPHD_ERR_CONFIG = 2,            /* unparsable or out-of-range configuration */
  PMCPHD_ERR_SINGULAR = 3,          /* a covariance had to be positive definite */
  PMCPHD_ERR_NOT_PSD = 4,           /* factorization failed */
  PMCPHD_ERR_INVALID_EMBEDDING = 5, /* HMC cross-feeds give a non-PSD noise covariance */
  PMCPHD_ERR_NUMERIC = 6,           /* NaN/Inf weights or weight degeneracy */
  PMCPHD_ERR_IO = 7,                /* file could not be read or written */
  PMCPHD_ERR_INTERNAL = 8
} pmcphd_status;

/* Message of the last failed call on this thread; never NULL. */
PMCPHD_API const char* pmcphd_last_error(void);
PMCPHD_API const char* pmcphd_status_name(pmcphd_status status);
PMCPHD_API const char* pmcphd_version(void);

/*
 * String outputs: the text is copied into buf (NUL-terminated, truncated to
 * capacity - 1 characters) and *needed receives the full length excluding
 * the terminator. buf may be NULL when capacity is 0.
 */

/* ---- Model ---------------------------------------------------------------- */

typedef struct pmcphd_model pmcphd_model;

/* Builds the pairwise model from a JSON HMC description with keys
 * F, Q, H, R, m0, P0, F2, H2 (matrices as arrays of rows). */
PMCPHD_API pmcphd_status pmcphd_model_from_hmc_json(const char* json, pmcphd_model** out);
PMCPHD_API void pmcphd_model_destroy(pmcphd_model* model);
PMCPHD_API pmcphd_status pmcphd_model_dims(const pmcphd_model* model, int* state_dim, int* obs_dim);
/* Copies the (m+q) x (m+q) transition and noise matrices in column-major order. */
PMCPHD_API pmcphd_status pmcphd_model_matrices(const pmcphd_model* model, double* transition, double* noise_cov);
PMCPHD_API pmcphd_status pmcphd_model_validate(const pmcphd_model* model, int* ok, char* report, size_t capacity,
                                               size_t* needed);

/* ---- Filter --------------------------------------------------------------- */

enum { PMCPHD_RESAMPLE_SYSTEMATIC = 0, PMCPHD_RESAMPLE_MULTINOMIAL = 1 };
enum { PMCPHD_LIKELIHOOD_CONDITIONAL = 0, PMCPHD_LIKELIHOOD_PREDICTIVE = 1 };
enum { PMCPHD_BIRTH_PRIOR = 0, PMCPHD_BIRTH_MEASUREMENT = 1 };

typedef struct pmcphd_filter_params {
  double p_survival;
  double p_detection;
  size_t particles_per_target;
  size_t birth_particles;
  double clutter_rate;
  double region_volume;
  int resampling;
  int likelihood;
  int birth_placement;
} pmcphd_filter_params;

PMCPHD_API void pmcphd_filter_params_default(pmcphd_filter_params* params);

typedef struct pmcphd_filter pmcphd_filter;

/* Birth components over the pair space of dimension d = m + q: masses[n],
 * means[n * d] and covariances[n * d * d] (each column-major). */
PMCPHD_API pmcphd_status pmcphd_filter_create(const pmcphd_model* model, const pmcphd_filter_params* params,
                                              size_t birth_count, const double* birth_masses,
                                              const double* birth_means, const double* birth_covs, uint64_t seed,
                                              pmcphd_filter** out);
PMCPHD_API void pmcphd_filter_destroy(pmcphd_filter* filter);
PMCPHD_API pmcphd_status pmcphd_filter_initialize(pmcphd_filter* filter, double expected_targets);
/* measurements holds count vectors of dimension q, one after another. */
PMCPHD_API pmcphd_status pmcphd_filter_step(pmcphd_filter* filter, const double* measurements, size_t count);
/* Writes up to capacity state vectors (m values each) and the number of
 * estimates to *count; *cardinality receives the unrounded estimate. */
PMCPHD_API pmcphd_status pmcphd_filter_estimates(const pmcphd_filter* filter, double* states, size_t capacity,
                                                 size_t* count, double* cardinality);
PMCPHD_API pmcphd_status pmcphd_filter_cloud_size(const pmcphd_filter* filter, size_t* particles, double* mass);

/* ---- Metric --------------------------------------------------------------- */

/* x holds nx points and y holds ny points of dimension dim, one after another. */
PMCPHD_API pmcphd_status pmcphd_ospa(const double* x, size_t nx, const double* y, size_t ny, size_t dim,
                                     double cutoff, double order, double* distance);

/* ---- Experiment ----------------------------------------------------------- */

typedef struct pmcphd_run_options {
  const char* config_path; /* NULL or "" uses the built-in defaults */
  int override_seed;
  uint64_t seed;
  int runs;                /* <= 0 keeps the configured value */
  const char* output_dir;  /* NULL keeps the configured value */
  const char* filters;     /* comma-separated names, NULL keeps the configured value */
  int threads;             /* < 0 keeps the configured value, 0 = all cores */
} pmcphd_run_options;

PMCPHD_API void pmcphd_run_options_default(pmcphd_run_options* options);

typedef struct pmcphd_summary pmcphd_summary;

PMCPHD_API pmcphd_status pmcphd_run_experiment(const pmcphd_run_options* options, pmcphd_summary** out);
PMCPHD_API void pmcphd_summary_destroy(pmcphd_summary* summary);
PMCPHD_API pmcphd_status pmcphd_summary_text(const pmcphd_summary* summary, char* buf, size_t capacity,
                                             size_t* needed);
PMCPHD_API pmcphd_status pmcphd_summary_output_dir(const pmcphd_summary* summary, char* buf, size_t capacity,
                                                   size_t* needed);
PMCPHD_API size_t pmcphd_summary_filter_count(const pmcphd_summary* summary);
PMCPHD_API pmcphd_status pmcphd_summary_filter_name(const pmcphd_summary* summary, size_t index, char* buf,
                                                    size_t capacity, size_t* needed);
PMCPHD_API pmcphd_status pmcphd_summary_filter_stats(const pmcphd_summary* summary, size_t index,
                                                     double* mean_ospa, int* succeeded_runs, int* failed_runs);

PMCPHD_API pmcphd_status pmcphd_validate_config(const char* path, int* valid, char* report, size_t capacity,
                                                size_t* needed);
/* Newline-separated list of written files. */
PMCPHD_API pmcphd_status pmcphd_emit_plots(const char* output_dir, char* written, size_t capacity,
                                           size_t* needed);
PMCPHD_API pmcphd_status pmcphd_default_config_json(char* buf, size_t capacity, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
