/* C interface to the flowcast forecasting library. */

#ifndef FLOWCAST_H
#define FLOWCAST_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum FcStatus {
  // Success.
  FC_STATUS_OK = 0,
  // A required pointer argument was null.
  FC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  FC_STATUS_INVALID_UTF8 = 2,
  // An argument was out of range for the handle.
  FC_STATUS_INVALID_ARGUMENT = 3,
  // File could not be read, written, or parsed.
  FC_STATUS_IO = 4,
  // Configuration failed to load or validate.
  FC_STATUS_CONFIG = 5,
  // Calendar construction or lookup failed.
  FC_STATUS_CALENDAR = 6,
  // Flow model failure.
  FC_STATUS_FLOW = 7,
  // Waiting model failure.
  FC_STATUS_WAIT = 8,
  // Sampler failure.
  FC_STATUS_MCMC = 9,
  // Evaluation failure.
  FC_STATUS_EVAL = 10,
  // Baseline model failure.
  FC_STATUS_BASELINE = 11,
  // The run needs a config section or input artifact that is absent.
  FC_STATUS_MISSING_INPUT = 12,
  // A library panic was caught at the boundary.
  FC_STATUS_PANIC = 13,
} FcStatus;

// A contiguous service calendar loaded from `calendar.csv`.
typedef struct FcCalendar FcCalendar;

// Posterior draws loaded from a draws CSV.
typedef struct FcDraws FcDraws;

// A daily flow series aligned to a calendar.
typedef struct FcFlowSeries FcFlowSeries;

// A loaded, validated run configuration.
typedef struct FcRunConfig FcRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fc_version(void);

// Message for the most recent failure on this thread. The pointer is
// valid until the next failing call on the same thread.
const char *fc_last_error_message(void);

// Loads and validates a JSON run configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for a
// single pointer write. On `FC_STATUS_OK` the caller owns the handle
// and must release it with [`fc_run_config_free`].
enum FcStatus fc_run_config_load(const char *path, struct FcRunConfig **out);

// Overrides the run seed.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_run_config_set_seed(struct FcRunConfig *cfg, uint64_t seed);

// Overrides the output directory.
//
// # Safety
// `cfg` must be a live handle; `path` must be NUL-terminated.
enum FcStatus fc_run_config_set_out_dir(struct FcRunConfig *cfg, const char *path);

// Reads the run seed.
//
// # Safety
// `cfg` must be a live handle; `out` must be valid for one write.
enum FcStatus fc_run_config_seed(const struct FcRunConfig *cfg, uint64_t *out);

// Writes the 16-character configuration hash plus a trailing NUL into
// `buf`, which must hold at least 17 bytes.
//
// # Safety
// `cfg` must be a live handle; `buf` must be valid for `buf_len`
// writable bytes.
enum FcStatus fc_run_config_hash(const struct FcRunConfig *cfg, char *buf, size_t buf_len);

// Releases a config handle; a null pointer is a no-op.
//
// # Safety
// `cfg` must be null or a live handle, and must not be used afterward.
void fc_run_config_free(struct FcRunConfig *cfg);

// Generates the synthetic dataset configured in the simulate section.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_simulate(const struct FcRunConfig *cfg);

// Fits the daily-flow model on the training window.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_fit_flow(const struct FcRunConfig *cfg);

// Fits the sub-daily wait regression on the training window.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_fit_wait(const struct FcRunConfig *cfg);

// Predicts daily flows over the forecast window.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_predict_flow(const struct FcRunConfig *cfg);

// Predicts sub-daily waits over the forecast window.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_predict_wait(const struct FcRunConfig *cfg);

// Scores predictions against observed data.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_evaluate(const struct FcRunConfig *cfg);

// Materializes the configured train/test split.
//
// # Safety
// `cfg` must be a live handle from [`fc_run_config_load`].
enum FcStatus fc_cmd_scenario(const struct FcRunConfig *cfg);

// Reads a `calendar.csv` artifact.
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid for one pointer
// write. On `FC_STATUS_OK` the caller owns the handle and must release
// it with [`fc_calendar_free`].
enum FcStatus fc_calendar_read(const char *path, struct FcCalendar **out);

// Number of days in the calendar.
//
// # Safety
// `cal` must be a live handle; `out` must be valid for one write.
enum FcStatus fc_calendar_len(const struct FcCalendar *cal, size_t *out);

// Releases a calendar handle; a null pointer is a no-op.
//
// # Safety
// `cal` must be null or a live handle, and must not be used afterward.
void fc_calendar_free(struct FcCalendar *cal);

// Reads a `flows.csv` artifact aligned against a calendar.
//
// # Safety
// `path` must be NUL-terminated; `cal` must be a live handle; `out`
// must be valid for one pointer write. On `FC_STATUS_OK` the caller
// owns the handle and must release it with [`fc_flow_series_free`].
enum FcStatus fc_flow_series_read(const char *path,
                                  const struct FcCalendar *cal,
                                  struct FcFlowSeries **out);

// Number of days in the series.
//
// # Safety
// `series` must be a live handle; `out` must be valid for one write.
enum FcStatus fc_flow_series_len(const struct FcFlowSeries *series, size_t *out);

// Flow of day `i` (1-based).
//
// # Safety
// `series` must be a live handle; `out` must be valid for one write.
enum FcStatus fc_flow_series_flow(const struct FcFlowSeries *series, size_t i, double *out);

// Releases a flow series handle; a null pointer is a no-op.
//
// # Safety
// `series` must be null or a live handle, and must not be used
// afterward.
void fc_flow_series_free(struct FcFlowSeries *series);

// Reads a posterior draws CSV.
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid for one pointer
// write. On `FC_STATUS_OK` the caller owns the handle and must release
// it with [`fc_draws_free`].
enum FcStatus fc_draws_read(const char *path, struct FcDraws **out);

// Total number of retained draws across all chains.
//
// # Safety
// `draws` must be a live handle; `out` must be valid for one write.
enum FcStatus fc_draws_total(const struct FcDraws *draws, size_t *out);

// Posterior mean of the named parameter.
//
// # Safety
// `draws` must be a live handle; `name` must be NUL-terminated; `out`
// must be valid for one write.
enum FcStatus fc_draws_mean(const struct FcDraws *draws, const char *name, double *out);

// Releases a draws handle; a null pointer is a no-op.
//
// # Safety
// `draws` must be null or a live handle, and must not be used
// afterward.
void fc_draws_free(struct FcDraws *draws);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWCAST_H */
