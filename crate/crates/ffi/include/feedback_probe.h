#ifndef FEEDBACK_PROBE_H
#define FEEDBACK_PROBE_H

/* Generated from the Rust sources by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values above OK mirror the CLI's exit
 * codes: invalid input 2, bad data 3, numerical failure 4.
 */
typedef enum {
  FP_STATUS_OK = 0,
  FP_STATUS_NULL_ARGUMENT = 1,
  FP_STATUS_INVALID_ARGUMENT = 2,
  FP_STATUS_DATA_ERROR = 3,
  FP_STATUS_NUMERIC_ERROR = 4,
  FP_STATUS_PANIC = 5,
} FpStatus;

/**
 * A fitted feedback curve plus its report. Opaque; create with
 * `fp_fit`, release with `fp_fit_free`.
 */
typedef struct FpFit FpFit;

/**
 * Deployment records: prior predictions, injected noise, observed next
 * predictions. Opaque; create with `fp_observations_new` or
 * `fp_observations_from_log`, release with `fp_observations_free`.
 */
typedef struct FpObservations FpObservations;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *fp_version(void);

/**
 * Message for the most recent failure on the calling thread. The
 * pointer stays valid until the next failing call on the same thread;
 * never free it.
 */
const char *fp_last_error(void);

/**
 * Build an observation handle from three arrays of length `len`.
 * Copies the data; the caller keeps ownership of the inputs.
 *
 * # Safety
 * `prior`, `noise`, and `next` must point to `len` readable doubles;
 * `out` must be a valid location to store the new handle.
 */
FpStatus fp_observations_new(const double *prior,
                             const double *noise,
                             const double *next,
                             size_t len,
                             FpObservations **out);

/**
 * Read an observation log file (the CLI's CSV format) into a handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
FpStatus fp_observations_from_log(const char *path, FpObservations **out);

/**
 * Rows in the handle; 0 for NULL.
 *
 * # Safety
 * `obs` must be NULL or a live handle from this library.
 */
size_t fp_observations_len(const FpObservations *obs);

/**
 * Release an observation handle. NULL is a no-op.
 *
 * # Safety
 * `obs` must be NULL or a handle not freed before.
 */
void fp_observations_free(FpObservations *obs);

/**
 * Simulate a scenario (JSON spec) into a fresh observation handle.
 *
 * # Safety
 * `scenario_json` must be NUL-terminated; `out` must be valid.
 */
FpStatus fp_simulate_json(const char *scenario_json, FpObservations **out);

/**
 * Fit the two-stage feedback estimator. `spec_json` carries the noise
 * declaration, both bases, and optional split / bootstrap settings.
 *
 * # Safety
 * `obs` must be a live handle, `spec_json` NUL-terminated, `out` valid.
 */
FpStatus fp_fit(const FpObservations *obs, const char *spec_json, FpFit **out);

/**
 * Number of grid points in the fitted curve; 0 for NULL.
 *
 * # Safety
 * `fit` must be NULL or a live handle.
 */
size_t fp_fit_grid_len(const FpFit *fit);

/**
 * Copy the curve into caller buffers of length `len` (which must equal
 * `fp_fit_grid_len`): grid locations, centered estimates, pointwise
 * standard errors. Any output pointer may be NULL to skip that column.
 *
 * # Safety
 * Non-NULL output pointers must have room for `len` doubles.
 */
FpStatus fp_fit_curve(const FpFit *fit,
                      double *grid,
                      double *estimate,
                      double *pointwise_se,
                      size_t len);

/**
 * Copy bootstrap band widths into a buffer of length `len`. Fails with
 * InvalidArgument when the fit was run without bootstrap replicates.
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
FpStatus fp_fit_bootstrap_se(const FpFit *fit, double *out, size_t len);

/**
 * Render the fit's JSON report into a fresh string. Release it with
 * `fp_string_free`.
 *
 * # Safety
 * `fit` must be a live handle; `out` must be valid.
 */
FpStatus fp_fit_report_json(const FpFit *fit, char **out);

/**
 * Release a fit handle. NULL is a no-op.
 *
 * # Safety
 * `fit` must be NULL or a handle not freed before.
 */
void fp_fit_free(FpFit *fit);

/**
 * Release a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string from `fp_fit_report_json` not freed
 * before.
 */
void fp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEEDBACK_PROBE_H */
