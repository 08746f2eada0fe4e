#ifndef PCA_PHASEFIELD_H
#define PCA_PHASEFIELD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of values in one time-series sample.
 */
#define PCA_SAMPLE_LEN 13

typedef enum PcaStatus {
  PCA_STATUS_OK = 0,
  PCA_STATUS_NULL_POINTER = 1,
  PCA_STATUS_INVALID_ARGUMENT = 2,
  PCA_STATUS_CONFIG = 3,
  PCA_STATUS_SOLVER = 4,
  PCA_STATUS_IO = 5,
  PCA_STATUS_UNAVAILABLE = 6,
  PCA_STATUS_PANIC = 7,
} PcaStatus;

/**
 * Parsed configuration plus the source text it came from.
 */
typedef struct PcaConfig PcaConfig;

/**
 * Analysis verdicts of a run.
 */
typedef struct PcaReport PcaReport;

/**
 * A completed integration.
 */
typedef struct PcaRun PcaRun;

typedef struct PcaCheck {
  bool asserted;
  bool passed;
  double margin;
} PcaCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pca_last_error_message(void);

/**
 * Comma-separated column names of a sample. Static storage.
 */
const char *pca_series_header(void);

/**
 * Parse a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PcaStatus pca_config_from_toml(const char *text, struct PcaConfig **out);

/**
 * Override one entry (`key` as accepted by `--set`, `value` in TOML
 * syntax). On failure the configuration is left unchanged.
 *
 * # Safety
 * `cfg` must come from [`pca_config_from_toml`]; strings NUL-terminated.
 */
enum PcaStatus pca_config_set(struct PcaConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or come from [`pca_config_from_toml`], freed once.
 */
void pca_config_free(struct PcaConfig *cfg);

/**
 * Integrate the configured run. No files are written.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum PcaStatus pca_run_new(const struct PcaConfig *cfg, struct PcaRun **out);

/**
 * Number of output samples, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t pca_run_sample_count(const struct PcaRun *run);

/**
 * Copy sample `index` into `out[0..PCA_SAMPLE_LEN]`, columns ordered as in
 * [`pca_series_header`].
 *
 * # Safety
 * `run` must be a live handle; `out` must hold `len` doubles.
 */
enum PcaStatus pca_run_sample(const struct PcaRun *run, size_t index, double *out, size_t len);

/**
 * # Safety
 * `run` must be null or come from [`pca_run_new`], freed once.
 */
void pca_run_free(struct PcaRun *run);

/**
 * Run every long-time check on a finished run.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum PcaStatus pca_run_analyze(const struct PcaRun *run, struct PcaReport **out);

/**
 * True iff every asserted check passed; false for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
bool pca_report_passed(const struct PcaReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
size_t pca_report_check_count(const struct PcaReport *report);

/**
 * Name of check `index`, or null when out of range. Owned by the report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *pca_report_check_name(const struct PcaReport *report, size_t index);

/**
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum PcaStatus pca_report_check(const struct PcaReport *report, size_t index, struct PcaCheck *out);

/**
 * Predicted decay rate; `Unavailable` when the convergence condition
 * does not hold.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum PcaStatus pca_report_beta_predicted(const struct PcaReport *report, double *out);

/**
 * # Safety
 * `report` must be null or come from [`pca_run_analyze`], freed once.
 */
void pca_report_free(struct PcaReport *report);

/**
 * Largest pairwise distance between the closed-form, discrete and
 * minimised steady states of the configured grid.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum PcaStatus pca_steady_max_disagreement(const struct PcaConfig *cfg, double tol, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCA_PHASEFIELD_H */
