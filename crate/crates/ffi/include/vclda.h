#ifndef VCLDA_H
#define VCLDA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcldaStatus {
  VCLDA_STATUS_OK = 0,
  VCLDA_STATUS_NULL_POINTER = 1,
  VCLDA_STATUS_INVALID_ARGUMENT = 2,
  VCLDA_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Singular or ill-conditioned system, degenerate scale, or no feasible candidate.
   */
  VCLDA_STATUS_NUMERICAL = 4,
  VCLDA_STATUS_IO = 5,
  VCLDA_STATUS_PARSE = 6,
  VCLDA_STATUS_PANIC = 7,
} VcldaStatus;

/**
 * Fitted classifier handle.
 */
typedef struct VcldaModel VcldaModel;

/**
 * Settings for [`vclda_fit`]. Obtain defaults from [`vclda_fit_options_default`].
 */
typedef struct VcldaFitOptions {
  size_t degree;
  size_t num_basis;
  /**
   * Group-lasso penalty, used when `high_dimensional` is nonzero.
   */
  double lambda;
  /**
   * 0: closed-form solve; nonzero: group-lasso ISTA.
   */
  int32_t high_dimensional;
  /**
   * 0: equal priors; nonzero: priors estimated from class frequencies.
   */
  int32_t estimated_prior;
  size_t max_iters;
  double kkt_tol;
} VcldaFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *vclda_last_error(void);

struct VcldaFitOptions vclda_fit_options_default(void);

/**
 * Fits a model on `n` samples with `p` features. `x` is `n × p`, `u` and `y`
 * have length `n`, labels are 0 or 1. `options` may be null for defaults.
 *
 * # Safety
 * All pointers must be valid for the stated lengths; `out` must be writable.
 */
enum VcldaStatus vclda_fit(const double *x,
                           const double *u,
                           const uint8_t *y,
                           size_t n,
                           size_t p,
                           const struct VcldaFitOptions *options,
                           struct VcldaModel **out);

/**
 * Selects basis size (and penalty when `high_dimensional` is nonzero) by
 * 5-fold cross-validation, then refits. The chosen values are written to
 * `selected_ln` / `selected_lambda` when those are non-null.
 *
 * # Safety
 * As for [`vclda_fit`].
 */
enum VcldaStatus vclda_cross_validate(const double *x,
                                      const double *u,
                                      const uint8_t *y,
                                      size_t n,
                                      size_t p,
                                      int32_t high_dimensional,
                                      int32_t estimated_prior,
                                      uint64_t seed,
                                      struct VcldaModel **out,
                                      size_t *selected_ln,
                                      double *selected_lambda);

/**
 * Writes `n` labels (0 or 1) for the rows of `x` into `labels`.
 *
 * # Safety
 * `x` is `n × p`, `u` has length `n`, `labels` is writable for `n` bytes.
 */
enum VcldaStatus vclda_predict(const struct VcldaModel *model,
                               const double *x,
                               const double *u,
                               size_t n,
                               size_t p,
                               uint8_t *labels);

/**
 * Writes θ̂(u) into `out`, which must hold `len` = feature count doubles.
 *
 * # Safety
 * `out` is writable for `len` doubles.
 */
enum VcldaStatus vclda_eval_direction(const struct VcldaModel *model,
                                      double u,
                                      double *out,
                                      size_t len);

/**
 * Feature count of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t vclda_model_num_features(const struct VcldaModel *model);

/**
 * Basis size of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t vclda_model_num_basis(const struct VcldaModel *model);

/**
 * # Safety
 * `path` is a NUL-terminated UTF-8 string.
 */
enum VcldaStatus vclda_model_save(const struct VcldaModel *model, const char *path);

/**
 * # Safety
 * `path` is a NUL-terminated UTF-8 string; `out` is writable.
 */
enum VcldaStatus vclda_model_load(const char *path, struct VcldaModel **out);

/**
 * Serializes the model to a new string; free it with [`vclda_string_free`].
 *
 * # Safety
 * `out` is writable.
 */
enum VcldaStatus vclda_model_to_json(const struct VcldaModel *model, char **out);

/**
 * # Safety
 * `json` is a NUL-terminated UTF-8 string; `out` is writable.
 */
enum VcldaStatus vclda_model_from_json(const char *json, struct VcldaModel **out);

/**
 * # Safety
 * `s` is null or a string returned by this library, freed at most once.
 */
void vclda_string_free(char *s);

/**
 * # Safety
 * `model` is null or a live handle, freed at most once.
 */
void vclda_model_free(struct VcldaModel *model);

/**
 * Evaluates the clamped uniform B-spline basis at `u`. Writes `num_basis`
 * values, multiplied by sqrt(num_basis) when `scaled` is nonzero.
 *
 * # Safety
 * `out` is writable for `len` doubles.
 */
enum VcldaStatus vclda_bspline_eval(size_t degree,
                                    size_t num_basis,
                                    double u,
                                    int32_t scaled,
                                    double *out,
                                    size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VCLDA_H */
