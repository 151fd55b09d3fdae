#ifndef GP_RVM_H
#define GP_RVM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum GpRvmStatus {
  GP_RVM_STATUS_OK = 0,
  GP_RVM_STATUS_NULL_POINTER = 1,
  GP_RVM_STATUS_INVALID_ARGUMENT = 2,
  GP_RVM_STATUS_PARSE_ERROR = 3,
  GP_RVM_STATUS_EVAL_ERROR = 4,
  GP_RVM_STATUS_FIT_ERROR = 5,
  GP_RVM_STATUS_PANIC = 6,
} GpRvmStatus;

typedef enum GpRvmMode {
  /**
   * Generation budget with an adjusted-R² stop.
   */
  GP_RVM_MODE_KEIJZER = 0,
  /**
   * Node-evaluation budget with a maximum-error success check.
   */
  GP_RVM_MODE_NGUYEN = 1,
} GpRvmMode;

/**
 * Training inputs and target.
 */
typedef struct GpRvmDataset GpRvmDataset;

/**
 * A fitted weighted-sum model.
 */
typedef struct GpRvmModel GpRvmModel;

/**
 * Settings for `gp_rvm_run`. Obtain defaults from
 * `gp_rvm_run_options_default`.
 */
typedef struct GpRvmRunOptions {
  enum GpRvmMode mode;
  uint64_t max_generations;
  double fitness_stop;
  uint64_t max_node_evals;
  double abs_error;
} GpRvmRunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gp_rvm_version(void);

/**
 * Message for the last failed call on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *gp_rvm_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void gp_rvm_string_free(char *s);

/**
 * Builds a dataset from `n` row-major points of `dims` inputs each.
 *
 * # Safety
 * `inputs` must point to `n * dims` doubles, `target` to `n` doubles and
 * `out` to writable storage for one handle.
 */
enum GpRvmStatus gp_rvm_dataset_new(const double *inputs,
                                    const double *target,
                                    uintptr_t n,
                                    uintptr_t dims,
                                    struct GpRvmDataset **out);

/**
 * Samples the training and test sets of a named benchmark. `test` may be
 * null.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `train` and `test` (when not
 * null) must be writable.
 */
enum GpRvmStatus gp_rvm_benchmark_dataset(const char *name,
                                          uint64_t seed,
                                          struct GpRvmDataset **train,
                                          struct GpRvmDataset **test);

/**
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t gp_rvm_dataset_len(const struct GpRvmDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a live handle; it is invalid afterwards.
 */
void gp_rvm_dataset_free(struct GpRvmDataset *dataset);

struct GpRvmRunOptions gp_rvm_run_options_default(enum GpRvmMode mode);

/**
 * Runs one trial on `dataset` and returns the final model.
 *
 * # Safety
 * `dataset` must be a live handle, `options` null or valid, and `out`
 * writable.
 */
enum GpRvmStatus gp_rvm_run(const struct GpRvmDataset *dataset,
                            const struct GpRvmRunOptions *options,
                            uint64_t seed,
                            struct GpRvmModel **out);

/**
 * Loads a model saved as JSON (the `model` object of a run report).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum GpRvmStatus gp_rvm_model_from_json(const char *json, struct GpRvmModel **out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum GpRvmStatus gp_rvm_model_to_json(const struct GpRvmModel *model, char **out);

/**
 * The model as a prefix expression string.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum GpRvmStatus gp_rvm_model_expression(const struct GpRvmModel *model, char **out);

/**
 * Training adjusted R² of a model produced by `gp_rvm_run`; NaN for
 * loaded models.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double gp_rvm_model_fitness(const struct GpRvmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
bool gp_rvm_model_success(const struct GpRvmModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t gp_rvm_model_dims(const struct GpRvmModel *model);

/**
 * Evaluates the model at `n` row-major points; `dims` must match the
 * model.
 *
 * # Safety
 * `model` must be a live handle, `points` must hold `n * dims` doubles and
 * `out` room for `n`.
 */
enum GpRvmStatus gp_rvm_model_predict(const struct GpRvmModel *model,
                                      const double *points,
                                      uintptr_t n,
                                      uintptr_t dims,
                                      double *out);

/**
 * # Safety
 * `model` must be null or a live handle; it is invalid afterwards.
 */
void gp_rvm_model_free(struct GpRvmModel *model);

/**
 * Parses a prefix expression and evaluates it column-wise at `n` row-major
 * points. Non-finite results are an error.
 *
 * # Safety
 * `expr` must be a NUL-terminated string, `points` must hold `n * dims`
 * doubles and `out` room for `n`.
 */
enum GpRvmStatus gp_rvm_expr_eval(const char *expr,
                                  const double *points,
                                  uintptr_t n,
                                  uintptr_t dims,
                                  double *out);

/**
 * Sequential sparse Bayesian fit of `target` on `k` column-major basis
 * columns of length `n`. Writes the final weight of each column to
 * `weights` (0 for pruned columns) and, when not null, the log marginal
 * likelihood to `log_ml`.
 *
 * # Safety
 * `columns` must hold `n * k` doubles, `target` `n`, and `weights` room
 * for `k`.
 */
enum GpRvmStatus gp_rvm_rvm_fit(const double *columns,
                                uintptr_t n,
                                uintptr_t k,
                                const double *target,
                                double *weights,
                                double *log_ml);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GP_RVM_H */
