#ifndef AIRPCA_H
#define AIRPCA_H

/* Generated by cbindgen from the airpca-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AirpcaStatus {
  AIRPCA_STATUS_OK = 0,
  AIRPCA_STATUS_NULL_POINTER = 1,
  AIRPCA_STATUS_INVALID_UTF8 = 2,
  AIRPCA_STATUS_INVALID_CONFIG = 3,
  AIRPCA_STATUS_RUNTIME_ERROR = 4,
  AIRPCA_STATUS_INVALID_ARGUMENT = 5,
  AIRPCA_STATUS_PANIC = 6,
} AirpcaStatus;

// Opaque handle to one completed experiment.
typedef struct AirpcaRun AirpcaRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *airpca_version(void);

// Executes the experiment described by a JSON configuration and hands back
// an owned run handle.
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out_run` a valid
// pointer; the handle must be released with [`airpca_run_free`].
enum AirpcaStatus airpca_run_execute(const char *config_json, struct AirpcaRun **out_run);

// Number of executed rounds (metric rows) in the run.
//
// # Safety
// `run` must be a live handle from [`airpca_run_execute`] (may be NULL,
// yielding 0).
size_t airpca_run_round_count(const struct AirpcaRun *run);

// Renders the run's metrics in the frozen `metrics.csv` column order.
//
// # Safety
// `run` must be a live handle and `out_csv` valid; free the result with
// [`airpca_string_free`].
enum AirpcaStatus airpca_run_metrics_csv(const struct AirpcaRun *run, char **out_csv);

// Renders the run summary as JSON.
//
// # Safety
// `run` must be a live handle and `out_json` valid; free the result with
// [`airpca_string_free`].
enum AirpcaStatus airpca_run_summary_json(const struct AirpcaRun *run, char **out_json);

// Runs the bound validators configured by the same JSON schema and returns
// the report (the `bounds_report.json` content).
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out_json` valid;
// free the result with [`airpca_string_free`].
enum AirpcaStatus airpca_validate_bounds(const char *config_json, char **out_json);

// The exponential integral `∫_x^∞ t⁻¹ e^{−t} dt` for `x > 0`.
//
// # Safety
// `out` must be a valid pointer.
enum AirpcaStatus airpca_exponential_integral(double x, double *out);

// Receive-power cap `P̄ / (M · Ei(G))` for a transmit budget in dBm.
//
// # Safety
// `out` must be a valid pointer.
enum AirpcaStatus airpca_max_avg_receive_power(double p_bar_dbm,
                                               size_t sub_channels,
                                               double truncation_threshold,
                                               double *out);

// Releases a run handle.
//
// # Safety
// `run` must be NULL or a handle from [`airpca_run_execute`] not yet freed.
void airpca_run_free(struct AirpcaRun *run);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string returned by this library not yet freed.
void airpca_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIRPCA_H */
