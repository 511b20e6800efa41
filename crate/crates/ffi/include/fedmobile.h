#ifndef FEDMOBILE_H
#define FEDMOBILE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_CONFIG = 3,
  FM_STATUS_PARSE = 4,
  FM_STATUS_NUMERIC = 5,
  FM_STATUS_IO = 6,
  FM_STATUS_RUNTIME = 7,
  FM_STATUS_OUT_OF_RANGE = 8,
  FM_STATUS_BUFFER_TOO_SMALL = 9,
  FM_STATUS_PANIC = 10,
} FmStatus;

typedef enum FmSplit {
  FM_SPLIT_TRAIN = 0,
  FM_SPLIT_VAL = 1,
  FM_SPLIT_TEST = 2,
} FmSplit;

typedef enum FmModelKind {
  FM_MODEL_KIND_MLP = 0,
  FM_MODEL_KIND_GCN = 1,
} FmModelKind;

typedef struct FmConfig FmConfig;

typedef struct FmModel FmModel;

typedef struct FmResults FmResults;

/**
 * One row of the results table. Algorithm and model names are available
 * through [`fm_results_algorithm`].
 */
typedef struct FmResultRow {
  uint64_t seed;
  uint64_t round;
  enum FmSplit split;
  double f1;
  double pr_auc;
  double ce;
  double cr;
  double kd;
  double reg;
} FmResultRow;

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *fm_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fm_string_free(char *s);

/**
 * Creates a config with built-in defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FmStatus fm_config_default(struct FmConfig **out);

/**
 * Parses `key = value` config text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FmStatus fm_config_parse(const char *text, struct FmConfig **out);

/**
 * Sets one key and revalidates the config.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum FmStatus fm_config_set(struct FmConfig *cfg, const char *key, const char *value);

/**
 * Current value of `key` as a new string; free with [`fm_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle, `key` NUL-terminated, `out` valid.
 */
enum FmStatus fm_config_get(const struct FmConfig *cfg, const char *key, char **out);

/**
 * Whole config in `key = value` form; free with [`fm_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid.
 */
enum FmStatus fm_config_serialize(const struct FmConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void fm_config_free(struct FmConfig *cfg);

/**
 * Runs the configured experiment over all its seeds.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid.
 */
enum FmStatus fm_run_experiment(const struct FmConfig *cfg, struct FmResults **out);

/**
 * # Safety
 * `res` must be a live handle and `out` valid.
 */
enum FmStatus fm_results_len(const struct FmResults *res, size_t *out);

/**
 * # Safety
 * `res` must be a live handle and `out` valid.
 */
enum FmStatus fm_results_get(const struct FmResults *res, size_t index, struct FmResultRow *out);

/**
 * Algorithm and model names of row `index` as `"algorithm,model"`; free
 * with [`fm_string_free`].
 *
 * # Safety
 * `res` must be a live handle and `out` valid.
 */
enum FmStatus fm_results_algorithm(const struct FmResults *res, size_t index, char **out);

/**
 * Writes results, summary and curve files into `dir`.
 *
 * # Safety
 * `res` must be a live handle and `dir` NUL-terminated.
 */
enum FmStatus fm_results_write(const struct FmResults *res, const char *dir);

/**
 * Copy of the final model of the `index`-th seed run.
 *
 * # Safety
 * `res` must be a live handle and `out` valid.
 */
enum FmStatus fm_results_model(const struct FmResults *res, size_t index, struct FmModel **out);

/**
 * # Safety
 * `res` must be null or a handle not yet freed.
 */
void fm_results_free(struct FmResults *res);

/**
 * F1 of binary predictions against binary labels.
 *
 * # Safety
 * `predicted` and `labels` must each hold `len` elements; `out` valid.
 */
enum FmStatus fm_f1(const uint32_t *predicted, const uint32_t *labels, size_t len, double *out);

/**
 * Average precision of positive-class scores.
 *
 * # Safety
 * `scores` and `labels` must each hold `len` elements; `out` valid.
 */
enum FmStatus fm_pr_auc(const double *scores, const uint32_t *labels, size_t len, double *out);

/**
 * Xavier-initialized two-class model with the given hidden widths.
 *
 * # Safety
 * `hidden` must hold `num_hidden` elements (may be null when zero); `out` valid.
 */
enum FmStatus fm_model_init(enum FmModelKind kind,
                            size_t input_dim,
                            const size_t *hidden,
                            size_t num_hidden,
                            uint64_t seed,
                            struct FmModel **out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum FmStatus fm_model_num_params(const struct FmModel *model, size_t *out);

/**
 * Logits of a dense model for a row-major `rows × cols` feature matrix,
 * written row-major into `logits` (capacity `capacity`). `written` receives
 * the number of values; `FM_STATUS_BUFFER_TOO_SMALL` reports the size needed.
 *
 * # Safety
 * `features` must hold `rows * cols` values, `logits` `capacity` values;
 * `model` must be live and `written` valid.
 */
enum FmStatus fm_model_forward(const struct FmModel *model,
                               const double *features,
                               size_t rows,
                               size_t cols,
                               double *logits,
                               size_t capacity,
                               size_t *written);

/**
 * JSON encoding of the model; free with [`fm_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum FmStatus fm_model_to_json(const struct FmModel *model, char **out);

/**
 * Parses a model written by [`fm_model_to_json`] or the CLI.
 *
 * # Safety
 * `json` must be NUL-terminated and `out` valid.
 */
enum FmStatus fm_model_from_json(const char *json, struct FmModel **out);

/**
 * FedAvg of `count` models weighted by `sizes`.
 *
 * # Safety
 * `models` must hold `count` live handles and `sizes` `count` values; `out` valid.
 */
enum FmStatus fm_fedavg(const struct FmModel *const *models,
                        const size_t *sizes,
                        size_t count,
                        struct FmModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void fm_model_free(struct FmModel *model);

#endif  /* FEDMOBILE_H */
