#ifndef SPECTROLEV_H
#define SPECTROLEV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SpectrolevStatus {
  SPECTROLEV_STATUS_OK = 0,
  SPECTROLEV_STATUS_NULL_POINTER = 1,
  SPECTROLEV_STATUS_DOMAIN = 2,
  SPECTROLEV_STATUS_INVALID_MODEL = 3,
  SPECTROLEV_STATUS_INFEASIBLE = 4,
  SPECTROLEV_STATUS_EMPTY_LEVEL_SET = 5,
  SPECTROLEV_STATUS_QUADRATURE = 6,
  SPECTROLEV_STATUS_PARSE = 7,
  SPECTROLEV_STATUS_IO = 8,
  SPECTROLEV_STATUS_OUT_OF_RANGE = 9,
  SPECTROLEV_STATUS_BUFFER_TOO_SMALL = 10,
  SPECTROLEV_STATUS_PANIC = 11,
} SpectrolevStatus;

/**
 * A spectrogram evaluated on a grid.
 */
typedef struct SpectrolevField SpectrolevField;

/**
 * Output of the annulus detector.
 */
typedef struct SpectrolevReport SpectrolevReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *spectrolev_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void spectrolev_string_free(char *s);

/**
 * `V_g h_k(u, v)` as real and imaginary parts.
 *
 * # Safety
 * `re` and `im` must be valid for writes.
 */
enum SpectrolevStatus spectrolev_gabor_hermite(uint32_t k,
                                               double u,
                                               double v,
                                               double *re,
                                               double *im);

/**
 * `max |V_g h_k| = ∏_{t=1}^k √(k/(e t))`.
 */
double spectrolev_hermite_max_abs(uint32_t k);

/**
 * Evaluates `Σ λ_m V_g h_{k_m} + σ F[ξ]` on the `(2n+1)²` grid over
 * `[-half_width, half_width]²`. `ks` and `lambdas` hold `n_modes` entries
 * and may be null when `n_modes` is 0.
 *
 * # Safety
 * The arrays must hold `n_modes` elements; `out` must be valid for writes.
 */
enum SpectrolevStatus spectrolev_field_new(double half_width,
                                           size_t n,
                                           const uint32_t *ks,
                                           const double *lambdas,
                                           size_t n_modes,
                                           double sigma,
                                           uint64_t seed,
                                           struct SpectrolevField **out);

/**
 * Releases a field. Null is ignored.
 *
 * # Safety
 * `field` must come from [`spectrolev_field_new`] and not have been freed.
 */
void spectrolev_field_free(struct SpectrolevField *field);

/**
 * Points per grid axis, `2n + 1`; 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t spectrolev_field_side(const struct SpectrolevField *field);

/**
 * Copies the `side²` magnitudes into `buf`, index `i * side + j` holding
 * the point `(u_i, v_j)`.
 *
 * # Safety
 * `field` must be a live handle and `buf` valid for `len` writes.
 */
enum SpectrolevStatus spectrolev_field_magnitudes(const struct SpectrolevField *field,
                                                  double *buf,
                                                  size_t len);

/**
 * Grid maximum `m_L` of the magnitude.
 *
 * # Safety
 * `field` must be a live handle and `out` valid for writes.
 */
enum SpectrolevStatus spectrolev_field_max(const struct SpectrolevField *field, double *out);

/**
 * Runs the detector on `field` with `slopes` lines through the origin.
 *
 * # Safety
 * `field` must be a live handle and `out` valid for writes.
 */
enum SpectrolevStatus spectrolev_detect(const struct SpectrolevField *field,
                                        size_t slopes,
                                        struct SpectrolevReport **out);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must come from [`spectrolev_detect`] and not have been freed.
 */
void spectrolev_report_free(struct SpectrolevReport *report);

/**
 * Number of detected annuli; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t spectrolev_report_annulus_count(const struct SpectrolevReport *report);

/**
 * Radius `η` and floor estimate `⌊π η²⌋` of annulus `index`.
 *
 * # Safety
 * `report` must be a live handle; `eta` and `k_floor` valid for writes.
 */
enum SpectrolevStatus spectrolev_report_annulus(const struct SpectrolevReport *report,
                                                size_t index,
                                                double *eta,
                                                uint64_t *k_floor);

/**
 * The report as a JSON string, released with [`spectrolev_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` valid for writes.
 */
enum SpectrolevStatus spectrolev_report_to_json(const struct SpectrolevReport *report, char **out);

/**
 * mACC of estimated against true mode indices (both any order).
 *
 * # Safety
 * `true_ks` must hold `n_true` and `est_ks` `n_est` elements (either may be
 * null when its length is 0); `out` must be valid for writes.
 */
enum SpectrolevStatus spectrolev_macc(const uint64_t *true_ks,
                                      size_t n_true,
                                      const uint64_t *est_ks,
                                      size_t n_est,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTROLEV_H */
