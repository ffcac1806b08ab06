#ifndef RLOCO_H
#define RLOCO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RlocoStatus {
  RLOCO_STATUS_OK = 0,
  RLOCO_STATUS_NULL_POINTER = 1,
  RLOCO_STATUS_INVALID_ARGUMENT = 2,
  RLOCO_STATUS_DIMENSION_MISMATCH = 3,
  RLOCO_STATUS_NUMERICAL = 4,
  RLOCO_STATUS_PARSE = 5,
  RLOCO_STATUS_PANIC = 6,
} RlocoStatus;

typedef enum RlocoTask {
  RLOCO_TASK_REGRESSION = 0,
  RLOCO_TASK_BINARY_CLASSIFICATION = 1,
} RlocoTask;

/**
 * Tabular data: an `n x p` feature matrix and a target.
 */
typedef struct RlocoDataset RlocoDataset;

/**
 * A fitted R-LOCO pipeline.
 */
typedef struct RlocoPipeline RlocoPipeline;

/**
 * A piecewise-linear model over `U[-1, 1]` features.
 */
typedef struct RlocoPwlModel RlocoPwlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rloco_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rloco_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from a `rloco_*_to_json` call and not be freed twice.
 */
void rloco_string_free(char *s);

/**
 * Copies a row-major `n x p` feature matrix and an `n`-vector target.
 * `task` is an [`RlocoTask`] value. Features are named `x1..xp`.
 *
 * # Safety
 * `features` must point to `n * p` doubles, `target` to `n`, `out` to writable storage.
 */
enum RlocoStatus rloco_dataset_new(const double *features,
                                   size_t n,
                                   size_t p,
                                   const double *target,
                                   int task,
                                   struct RlocoDataset **out);

/**
 * # Safety
 * `data` must come from [`rloco_dataset_new`]; `n` and `p` must be writable.
 */
enum RlocoStatus rloco_dataset_shape(const struct RlocoDataset *data, size_t *n, size_t *p);

/**
 * # Safety
 * `data` must be null or come from [`rloco_dataset_new`], and not be freed twice.
 */
void rloco_dataset_free(struct RlocoDataset *data);

/**
 * Parses a model from its JSON form: `regions` (per region, one `[lo, hi]`
 * pair per feature, nulls for unbounded ends), `coefficients` and `intercepts`.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum RlocoStatus rloco_pwl_from_json(const char *json, struct RlocoPwlModel **out);

/**
 * # Safety
 * `model` must come from [`rloco_pwl_from_json`]; `p` must be writable.
 */
enum RlocoStatus rloco_pwl_dim(const struct RlocoPwlModel *model, size_t *p);

/**
 * Evaluates the model at `x` (length `p`).
 *
 * # Safety
 * `x` must point to `p` doubles and `out` to one writable double.
 */
enum RlocoStatus rloco_pwl_evaluate(const struct RlocoPwlModel *model,
                                    const double *x,
                                    size_t p,
                                    double *out);

/**
 * # Safety
 * `model` must be null or come from [`rloco_pwl_from_json`], and not be freed twice.
 */
void rloco_pwl_free(struct RlocoPwlModel *model);

/**
 * Exact local Shapley values in closed form; writes `p` scores to `out`.
 *
 * # Safety
 * `x` and `out` must each point to `p` doubles.
 */
enum RlocoStatus rloco_lsv_closed_form(const struct RlocoPwlModel *model,
                                       const double *x,
                                       size_t p,
                                       double *out);

/**
 * Exact local Shapley values by enumerating all `2^p` coalitions (p <= 20).
 *
 * # Safety
 * `x` and `out` must each point to `p` doubles.
 */
enum RlocoStatus rloco_lsv_enumeration(const struct RlocoPwlModel *model,
                                       const double *x,
                                       size_t p,
                                       double *out);

/**
 * Fits LOCO models on `fit`, computes calibration deltas on `calibration`
 * and clusters them. `config_json` is a JSON pipeline configuration with
 * keys `learner`, `cluster`, `assignment`, `metric` and `seed`; null or
 * missing keys take the defaults.
 *
 * # Safety
 * Handles must be valid; `config_json` must be null or nul-terminated; `out` must be writable.
 */
enum RlocoStatus rloco_pipeline_fit(const struct RlocoDataset *fit,
                                    const struct RlocoDataset *calibration,
                                    const char *config_json,
                                    struct RlocoPipeline **out);

/**
 * # Safety
 * `pipeline` must be valid; `out` must be writable.
 */
enum RlocoStatus rloco_pipeline_n_clusters(const struct RlocoPipeline *pipeline, size_t *out);

/**
 * Regional attribution of `x`. `y` may be null, in which case the model's
 * prediction stands in for the label. Writes `p` scores to `scores`, the
 * cluster index to `cluster` and 1 to `undecidable` when the point tied
 * between clusters (it is then assigned to the lowest tied index).
 *
 * # Safety
 * `x` and `scores` must point to `p` doubles; `y` must be null or point to one double;
 * `cluster` and `undecidable` must be writable.
 */
enum RlocoStatus rloco_pipeline_explain(const struct RlocoPipeline *pipeline,
                                        const double *x,
                                        size_t p,
                                        const double *y,
                                        double *scores,
                                        size_t *cluster,
                                        int *undecidable);

/**
 * Serializes the pipeline; free the result with [`rloco_string_free`].
 *
 * # Safety
 * `pipeline` must be valid; `out` must be writable.
 */
enum RlocoStatus rloco_pipeline_to_json(const struct RlocoPipeline *pipeline, char **out);

/**
 * # Safety
 * `json` must be nul-terminated; `out` must be writable.
 */
enum RlocoStatus rloco_pipeline_from_json(const char *json, struct RlocoPipeline **out);

/**
 * # Safety
 * `pipeline` must be null or valid, and not be freed twice.
 */
void rloco_pipeline_free(struct RlocoPipeline *pipeline);

/**
 * `|s| / sum |s|` into `out`. An all-zero input yields the uniform vector and
 * sets `degenerate` to 1.
 *
 * # Safety
 * `scores` and `out` must point to `p` doubles; `degenerate` must be writable.
 */
enum RlocoStatus rloco_normalize(const double *scores, size_t p, double *out, int *degenerate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RLOCO_H */
