#ifndef CURVELAB_H
#define CURVELAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CurvelabStatus {
  CURVELAB_STATUS_OK = 0,
  CURVELAB_STATUS_NULL_POINTER = 1,
  CURVELAB_STATUS_INVALID_ARGUMENT = 2,
  CURVELAB_STATUS_ZERO_POLYNOMIAL = 3,
  CURVELAB_STATUS_LINEAR_TERM = 4,
  CURVELAB_STATUS_HOLDER_VIOLATED = 5,
  CURVELAB_STATUS_NUMERICAL = 6,
  CURVELAB_STATUS_BUFFER_TOO_SMALL = 7,
  CURVELAB_STATUS_PANIC = 8,
} CurvelabStatus;

/**
 * Samples of a function on a uniform grid.
 */
typedef struct CurvelabGrid CurvelabGrid;

/**
 * Polynomial `a_1 t + ... + a_d t^d`.
 */
typedef struct CurvelabPolynomial CurvelabPolynomial;

/**
 * Rows, fits and flags of one experiment.
 */
typedef struct CurvelabReport CurvelabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated, into
 * `buf` and returns its length in bytes (without the NUL). Truncates when
 * `cap` is too small.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t curvelab_last_error(char *buf, size_t cap);

/**
 * Builds `a_1 t + ... + a_d t^d` from `len` coefficients.
 *
 * # Safety
 * `coeffs` must point to `len` doubles; `out_poly` must be writable.
 */
enum CurvelabStatus curvelab_polynomial_new(const double *coeffs,
                                            size_t len,
                                            struct CurvelabPolynomial **out_poly);

/**
 * # Safety
 * `p` must be null or a handle from [`curvelab_polynomial_new`].
 */
void curvelab_polynomial_free(struct CurvelabPolynomial *p);

/**
 * # Safety
 * `p` must be a live polynomial handle; `value` must be writable.
 */
enum CurvelabStatus curvelab_polynomial_eval(const struct CurvelabPolynomial *p,
                                             double t,
                                             double *value);

/**
 * `#J_good(N)` and its bound over an automatically widened scale range.
 *
 * # Safety
 * `p` must be a live polynomial handle; `count` and `bound` writable.
 */
enum CurvelabStatus curvelab_classify(const struct CurvelabPolynomial *p,
                                      int32_t n_param,
                                      int64_t *count,
                                      int64_t *bound);

/**
 * Grid function on `[lo, hi]` with `len` samples.
 *
 * # Safety
 * `values` must point to `len` doubles; `out_grid` must be writable.
 */
enum CurvelabStatus curvelab_grid_new(double lo,
                                      double hi,
                                      const double *values,
                                      size_t len,
                                      struct CurvelabGrid **out_grid);

/**
 * # Safety
 * `g` must be null or a grid handle.
 */
void curvelab_grid_free(struct CurvelabGrid *g);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live grid handle.
 */
size_t curvelab_grid_len(const struct CurvelabGrid *g);

/**
 * Copies the samples into `buf` (`cap` doubles).
 *
 * # Safety
 * `g` must be a live grid handle; `buf` must point to `cap` doubles.
 */
enum CurvelabStatus curvelab_grid_values(const struct CurvelabGrid *g, double *buf, size_t cap);

/**
 * Hardy–Littlewood maximal function of `g`.
 *
 * # Safety
 * `g` must be a live grid handle; `out_grid` must be writable.
 */
enum CurvelabStatus curvelab_hl_maximal(const struct CurvelabGrid *g,
                                        struct CurvelabGrid **out_grid);

/**
 * `T_j(f, g)` on the grid of `f`.
 *
 * # Safety
 * All handles must be live; `out_grid` must be writable.
 */
enum CurvelabStatus curvelab_apply_tj(const struct CurvelabGrid *f,
                                      const struct CurvelabGrid *g,
                                      const struct CurvelabPolynomial *p,
                                      int32_t j,
                                      struct CurvelabGrid **out_grid);

/**
 * Normalized stationary-phase value at scale `m` and its limit.
 *
 * # Safety
 * `value` and `limit` must be writable.
 */
enum CurvelabStatus curvelab_stationary_phase(int32_t m,
                                              double xi,
                                              double eta,
                                              double *value,
                                              double *limit);

/**
 * Whitney decomposition of the union of `count` open intervals given as
 * `(lo, hi)` pairs in `intervals`. Writes up to `cap` intervals as scale
 * `k` and position `n` and stores the total in `len`; returns
 * `BufferTooSmall` (with `len` set) when `cap` is insufficient.
 *
 * # Safety
 * `intervals` must point to `2 count` doubles, `ks` and `ns` to `cap`
 * elements each, `len` must be writable.
 */
enum CurvelabStatus curvelab_whitney(const double *intervals,
                                     size_t count,
                                     int32_t *ks,
                                     int64_t *ns,
                                     size_t cap,
                                     size_t *len);

/**
 * Endpoint counterexample scaling experiment over `len` values of δ.
 *
 * # Safety
 * `deltas` must point to `len` doubles; `out_report` must be writable.
 */
enum CurvelabStatus curvelab_sharpness(size_t d,
                                       double r,
                                       double p1,
                                       double p2,
                                       const double *deltas,
                                       size_t len,
                                       size_t resolution,
                                       struct CurvelabReport **out_report);

/**
 * # Safety
 * `r` must be null or a report handle.
 */
void curvelab_report_free(struct CurvelabReport *r);

/**
 * 1 when every gating flag holds, 0 otherwise (and for a null handle).
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
int32_t curvelab_report_pass(const struct CurvelabReport *r);

/**
 * Looks up a fitted value such as `"slope"`.
 *
 * # Safety
 * `r` must be a live report handle, `key` a NUL-terminated string and
 * `value` writable.
 */
enum CurvelabStatus curvelab_report_fit(const struct CurvelabReport *r,
                                        const char *key,
                                        double *value);

/**
 * Writes the report CSV, NUL-terminated, into `buf`; `len` receives the
 * length without the NUL.
 *
 * # Safety
 * `r` must be a live report handle, `buf` must point to `cap` bytes and
 * `len` must be writable.
 */
enum CurvelabStatus curvelab_report_csv(const struct CurvelabReport *r,
                                        char *buf,
                                        size_t cap,
                                        size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CURVELAB_H */
