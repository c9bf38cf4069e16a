#ifndef TWOREGIME_H
#define TWOREGIME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum TrStatus {
  TR_STATUS_OK = 0,
  TR_STATUS_NULL_POINTER = 1,
  TR_STATUS_INVALID_INPUT = 2,
  TR_STATUS_DIMENSION = 3,
  TR_STATUS_INFEASIBLE = 4,
  TR_STATUS_SOLVER = 5,
  TR_STATUS_CONFIG = 6,
  TR_STATUS_BUFFER_TOO_SMALL = 7,
  TR_STATUS_PANIC = 8,
} TrStatus;

/**
 * Which vector [`tr_result_copy`] returns.
 */
typedef enum TrVector {
  TR_VECTOR_BETA = 0,
  TR_VECTOR_DELTA = 1,
  TR_VECTOR_GAMMA = 2,
  /**
   * Regime indicators as 0.0 or 1.0.
   */
  TR_VECTOR_REGIMES = 3,
} TrVector;

/**
 * Opaque data set.
 */
typedef struct TrDataset TrDataset;

/**
 * Opaque estimation result.
 */
typedef struct TrResult TrResult;

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *tr_last_error(void);

/**
 * Library version as a static string.
 */
const char *tr_version(void);

/**
 * Builds a data set from `y` (length `t`), `x` (`t×dx`, may be null when
 * `dx = 0`) and `f` (`t×k`, `k ≥ 1`).
 *
 * # Safety
 * Each pointer must be null or reference the stated number of values.
 */
enum TrStatus tr_dataset_new(const double *y,
                             size_t t,
                             const double *x,
                             size_t dx,
                             const double *f,
                             size_t k,
                             struct TrDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from [`tr_dataset_new`] not yet freed.
 */
void tr_dataset_free(struct TrDataset *ds);

/**
 * Least-squares fit. `options_json` may be null for defaults; keys are
 * `space`, `backend`, `form`, `solver` and `bcd` as in the CLI config.
 *
 * # Safety
 * `ds` must be a live handle; `options_json` null or NUL-terminated.
 */
enum TrStatus tr_estimate(const struct TrDataset *ds,
                          const char *options_json,
                          struct TrResult **out);

/**
 * # Safety
 * `res` must be null or a handle from [`tr_estimate`] not yet freed.
 */
void tr_result_free(struct TrResult *res);

/**
 * Mean squared residual of the fit.
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum TrStatus tr_result_objective(const struct TrResult *res, double *out);

/**
 * Solver status: 0 optimal, 1 time limit reached, 2 infeasible.
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum TrStatus tr_result_status(const struct TrResult *res, int32_t *out);

/**
 * Copies one vector into `buf`. `needed` receives its length; a null `buf`
 * or a short `cap` returns `BufferTooSmall` without copying.
 *
 * # Safety
 * `res` must be a live handle, `needed` writable and `buf` null or writable for `cap` values.
 */
enum TrStatus tr_result_copy(const struct TrResult *res,
                             enum TrVector which,
                             double *buf,
                             size_t cap,
                             size_t *needed);

/**
 * The full result as JSON; free with [`tr_string_free`].
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum TrStatus tr_result_to_json(const struct TrResult *res, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void tr_string_free(char *s);

/**
 * Bootstrap LR test with the data set's factors held fixed. The default
 * hypothesis is a zero coefficient on the second factor column.
 *
 * # Safety
 * `ds` must be a live handle, `options_json` null or NUL-terminated, outputs writable.
 */
enum TrStatus tr_bootstrap_lr(const struct TrDataset *ds,
                              const char *options_json,
                              double *lr,
                              double *p_value);

/**
 * Sup-Q test of no threshold effect.
 *
 * # Safety
 * `ds` must be a live handle, `options_json` null or NUL-terminated, outputs writable.
 */
enum TrStatus tr_linearity_test(const struct TrDataset *ds,
                                const char *options_json,
                                double *stat,
                                double *p_value);

#endif  /* TWOREGIME_H */
