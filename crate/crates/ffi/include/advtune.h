#ifndef ADVTUNE_H
#define ADVTUNE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum AdvStatus {
  ADV_OK = 0,
  ADV_NULL_POINTER = 1,
  ADV_INVALID_UTF8 = 2,
  ADV_DEGENERATE_TABLE = 3,
  ADV_RETRY_EXHAUSTED = 4,
  ADV_DIMENSION_MISMATCH = 5,
  ADV_LENGTH_MISMATCH = 6,
  ADV_NON_FINITE_LOSS = 7,
  ADV_BINNING_MISMATCH = 8,
  ADV_EMPTY_DATASET = 9,
  ADV_INVALID_ARGUMENT = 10,
  ADV_CONFIG_ERROR = 11,
  ADV_FORMAT_ERROR = 12,
  ADV_IO_ERROR = 13,
  ADV_JSON_ERROR = 14,
  ADV_PANIC = 15,
} AdvStatus;

/**
 * Opaque prior-table handle.
 */
typedef struct AdvPrior AdvPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *adv_last_error_message(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void adv_string_free(char *s);

/**
 * Uniform prior over the scene parameters with `bins` bins per dimension.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AdvStatus adv_prior_uniform(size_t bins, struct AdvPrior **out);

/**
 * Parses a prior from its JSON form.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum AdvStatus adv_prior_from_json(const char *json, struct AdvPrior **out);

/**
 * Serializes a prior to JSON. Free the result with [`adv_string_free`].
 *
 * # Safety
 * `prior` must be a live handle and `out` a valid pointer.
 */
enum AdvStatus adv_prior_to_json(const struct AdvPrior *prior, char **out);

/**
 * Releases a prior. NULL is ignored.
 *
 * # Safety
 * `prior` must come from this library and not have been freed.
 */
void adv_prior_free(struct AdvPrior *prior);

/**
 * Number of dimensions of the prior.
 *
 * # Safety
 * `prior` must be a live handle and `out` a valid pointer.
 */
enum AdvStatus adv_prior_dims(const struct AdvPrior *prior, size_t *out);

/**
 * Copies table `dim` into `buf`, which must hold exactly the table's bins.
 *
 * # Safety
 * `prior` must be a live handle and `buf` valid for `len` writes.
 */
enum AdvStatus adv_prior_table(const struct AdvPrior *prior, size_t dim, double *buf, size_t len);

/**
 * Draws one parameter vector, deterministically from `seed`, into `out`
 * (length must equal the number of dimensions).
 *
 * # Safety
 * `prior` must be a live handle and `out` valid for `len` writes.
 */
enum AdvStatus adv_prior_sample(const struct AdvPrior *prior,
                                uint64_t seed,
                                double *out,
                                size_t len);

/**
 * Multiplies each table by its likelihood and max-normalizes. `likelihood`
 * holds every dimension's bins back to back.
 *
 * # Safety
 * `prior` must be a live handle, `likelihood` valid for `len` reads and
 * `out` a valid pointer.
 */
enum AdvStatus adv_prior_bayes_update(const struct AdvPrior *prior,
                                      const double *likelihood,
                                      size_t len,
                                      struct AdvPrior **out);

/**
 * Weighted Gaussian KDE `sum_i w_i K_h(g - x_i)` evaluated at each grid point.
 *
 * # Safety
 * `values` and `weights` must be valid for `n` reads, `grid` for
 * `grid_len` reads and `out` for `grid_len` writes.
 */
enum AdvStatus adv_weighted_kde(const double *values,
                                const double *weights,
                                size_t n,
                                double bandwidth,
                                const double *grid,
                                size_t grid_len,
                                double *out);

/**
 * Smoothed `KL(p || q)` of two nonnegative tables of equal length.
 *
 * # Safety
 * `p` and `q` must be valid for `len` reads and `out` a valid pointer.
 */
enum AdvStatus adv_table_kl(const double *p, const double *q, size_t len, double *out);

/**
 * Runs the tuning loop from an experiment config document and returns
 * `{"config": ..., "report": ...}` as JSON. Relative dataset paths resolve
 * against the working directory. Free the result with [`adv_string_free`].
 *
 * # Safety
 * `config_json` must be a nul-terminated string and `out` a valid pointer.
 */
enum AdvStatus adv_tune_json(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVTUNE_H */
