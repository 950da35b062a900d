#ifndef EMRECON_H
#define EMRECON_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every C-ABI call.
 */
typedef enum EmrStatus {
  EMR_STATUS_OK = 0,
  EMR_STATUS_NULL_ARGUMENT = 1,
  EMR_STATUS_INVALID_UTF8 = 2,
  EMR_STATUS_CONFIG = 3,
  EMR_STATUS_IO = 4,
  EMR_STATUS_SOLVER = 5,
  EMR_STATUS_VERIFY = 6,
  EMR_STATUS_OUT_OF_RANGE = 7,
  EMR_STATUS_PANIC = 8,
} EmrStatus;

/**
 * Which reconstructed field to copy out.
 */
typedef enum EmrField {
  EMR_FIELD_EPS_RAW = 0,
  EMR_FIELD_MU_RAW = 1,
  EMR_FIELD_EPS_MASKED = 2,
  EMR_FIELD_MU_MASKED = 3,
} EmrField;

/**
 * Opaque run configuration.
 */
typedef struct EmrConfig EmrConfig;

/**
 * Opaque reconstruction outcome.
 */
typedef struct EmrResult EmrResult;

/**
 * Opaque observation trace.
 */
typedef struct EmrTrace EmrTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len` bytes). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
uintptr_t emr_last_error(char *buf, uintptr_t len);

/**
 * Fresh configuration with the built-in defaults.
 */
struct EmrConfig *emr_config_new(void);

/**
 * Parse and validate a TOML config file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid slot.
 */
enum EmrStatus emr_config_load(const char *path, struct EmrConfig **out);

/**
 * Set one configuration key from its TOML value representation, e.g.
 * `emr_config_set(cfg, "omega", "30.0")` or
 * `emr_config_set(cfg, "outer", "[[-3.4,3.4],[-0.8,0.8],[-0.4,0.4]]")`.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` valid strings.
 */
enum EmrStatus emr_config_set(struct EmrConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice.
 */
void emr_config_free(struct EmrConfig *cfg);

/**
 * Generate the synthetic observation trace for the configured phantom;
 * `noisy` selects the noise-bearing variant.
 *
 * # Safety
 * `cfg` live handle, `out` valid slot.
 */
enum EmrStatus emr_generate_data(const struct EmrConfig *cfg, bool noisy, struct EmrTrace **out);

/**
 * Write a trace in the CSV layout.
 *
 * # Safety
 * `trace` live handle, `path` valid string.
 */
enum EmrStatus emr_trace_write_csv(const struct EmrTrace *trace, const char *path);

/**
 * Load a trace from the CSV layout.
 *
 * # Safety
 * `path` valid string, `out` valid slot.
 */
enum EmrStatus emr_trace_load_csv(const char *path, struct EmrTrace **out);

/**
 * # Safety
 * `trace` must come from this library and not be freed twice.
 */
void emr_trace_free(struct EmrTrace *trace);

/**
 * Run the full reconstruction. With a null `trace` the observation data
 * is generated from the configured phantom and seed.
 *
 * # Safety
 * `cfg` live handle, `trace` null or live, `out` valid slot.
 */
enum EmrStatus emr_reconstruct(const struct EmrConfig *cfg,
                               const struct EmrTrace *trace,
                               struct EmrResult **out);

/**
 * Number of conjugate-gradient iterations recorded.
 *
 * # Safety
 * `res` must be a live handle.
 */
uintptr_t emr_result_iterations(const struct EmrResult *res);

/**
 * Final objective value.
 *
 * # Safety
 * `res` must be a live handle.
 */
double emr_result_objective(const struct EmrResult *res);

/**
 * Max of the thresholded permittivity image.
 *
 * # Safety
 * `res` must be a live handle.
 */
double emr_result_max_eps(const struct EmrResult *res);

/**
 * Max of the thresholded permeability image.
 *
 * # Safety
 * `res` must be a live handle.
 */
double emr_result_max_mu(const struct EmrResult *res);

/**
 * Grid node counts of the reconstruction.
 *
 * # Safety
 * `res` live handle; `dims` points at three writable usize slots.
 */
enum EmrStatus emr_result_dims(const struct EmrResult *res, uintptr_t *dims);

/**
 * Copy one nodal field (length = product of the dims) into `buf`.
 *
 * # Safety
 * `res` live handle; `buf` points at `len` writable doubles.
 */
enum EmrStatus emr_result_field(const struct EmrResult *res,
                                enum EmrField which,
                                double *buf,
                                uintptr_t len);

/**
 * # Safety
 * `res` must come from this library and not be freed twice.
 */
void emr_result_free(struct EmrResult *res);

/**
 * Discrete adjoint identity check; writes the true and the deliberately
 * sign-flipped discrepancies.
 *
 * # Safety
 * Output pointers must be writable or null.
 */
enum EmrStatus emr_adjoint_check(uint64_t seed, double *discrepancy, double *mutated_discrepancy);

/**
 * Run one standard case (`"i"`, `"ii"`, `"iii"`, `"iv"`) end to end,
 * writing every artifact under `workdir`.
 *
 * # Safety
 * `cfg` live handle; `case` and `workdir` valid strings.
 */
enum EmrStatus emr_run_case(const struct EmrConfig *cfg, const char *case_, const char *workdir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMRECON_H */
