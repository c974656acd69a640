#ifndef IBD_H
#define IBD_H

#include <stddef.h>
#include <stdint.h>

typedef enum IbdStatus {
  IBD_STATUS_OK = 0,
  IBD_STATUS_NULL_POINTER = 1,
  IBD_STATUS_INVALID_ARGUMENT = 2,
  IBD_STATUS_MODEL_FAILURE = 3,
  IBD_STATUS_IO = 4,
  IBD_STATUS_FORMAT = 5,
  IBD_STATUS_UNSUPPORTED = 6,
  IBD_STATUS_PANIC = 7,
} IbdStatus;

typedef struct IbdDataset IbdDataset;

typedef struct IbdExplanation IbdExplanation;

typedef struct IbdModel IbdModel;

// Scores `n_rows` row-major rows of `n_cols` values into `out`; returns 0
// on success. Called concurrently when more than one worker is used.
typedef int (*IbdScoreFn)(const double *rows,
                          size_t n_rows,
                          size_t n_cols,
                          double *out,
                          void *user_data);

typedef struct IbdExplainOptions {
  double interaction_preference;
  // Background row cap; 0 uses every row.
  size_t max_rows;
  uint64_t seed;
  size_t workers;
} IbdExplainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *ibd_last_error_message(void);

// # Safety
// `s` must come from this library or be null.
void ibd_string_free(char *s);

// Loads a CSV file. With a non-null `target` that column becomes the
// target: kept as numbers when numeric and no `positive_label` is given,
// mapped to 0/1 otherwise.
//
// # Safety
// String arguments must be nul-terminated or null where allowed.
enum IbdStatus ibd_dataset_load_csv(const char *path,
                                    const char *target,
                                    const char *positive_label,
                                    struct IbdDataset **out);

// Synthetic dataset: `xor`, `additive`, `grid4` or `product-noise`.
//
// # Safety
// `name` must be nul-terminated; `out` must be writable.
enum IbdStatus ibd_dataset_synth(const char *name,
                                 size_t n,
                                 uint64_t seed,
                                 struct IbdDataset **out);

// # Safety
// `ds` must be a live dataset handle; outputs may be null.
enum IbdStatus ibd_dataset_shape(const struct IbdDataset *ds, size_t *n_rows, size_t *n_features);

// # Safety
// `ds` must come from this library or be null.
void ibd_dataset_free(struct IbdDataset *ds);

// # Safety
// `ds` must be a live dataset handle with targets; `out` must be writable.
enum IbdStatus ibd_model_train_gbm(const struct IbdDataset *ds,
                                   size_t max_depth,
                                   size_t n_trees,
                                   double learning_rate,
                                   size_t min_leaf,
                                   uint64_t seed,
                                   struct IbdModel **out);

// `mtry` 0 means `floor(sqrt(p))`.
//
// # Safety
// `ds` must be a live dataset handle with targets; `out` must be writable.
enum IbdStatus ibd_model_train_rf(const struct IbdDataset *ds,
                                  size_t n_trees,
                                  size_t max_depth,
                                  size_t min_leaf,
                                  size_t mtry,
                                  uint64_t seed,
                                  struct IbdModel **out);

// # Safety
// `ds` must be a live dataset handle with targets; `out` must be writable.
enum IbdStatus ibd_model_train_linear(const struct IbdDataset *ds, struct IbdModel **out);

// # Safety
// `path` must be nul-terminated; `out` must be writable.
enum IbdStatus ibd_model_load(const char *path, struct IbdModel **out);

// # Safety
// `model` must be a live handle; `path` must be nul-terminated.
enum IbdStatus ibd_model_save(const struct IbdModel *model, const char *path);

// Wraps a C scoring function as a model. Categorical cells arrive as level
// indices into the sorted level list.
//
// # Safety
// `score` must stay callable and `user_data` valid for the model's life.
enum IbdStatus ibd_model_from_callback(const char *name,
                                       IbdScoreFn score,
                                       void *user_data,
                                       struct IbdModel **out);

// Scores every row of `ds` into `out`, which must hold `len >= n_rows`
// values.
//
// # Safety
// Handles must be live; `out` must point to `len` writable doubles.
enum IbdStatus ibd_model_predict(const struct IbdModel *model,
                                 const struct IbdDataset *ds,
                                 double *out,
                                 size_t len);

// # Safety
// `model` must come from this library or be null.
void ibd_model_free(struct IbdModel *model);

struct IbdExplainOptions ibd_explain_options_default(void);

// Sequential explanation of row `row` of `ds`, with `ds` as background.
// `options` may be null for defaults.
//
// # Safety
// Handles must be live; `out` must be writable.
enum IbdStatus ibd_explain(const struct IbdModel *model,
                           const struct IbdDataset *ds,
                           size_t row,
                           const struct IbdExplainOptions *options,
                           struct IbdExplanation **out);

// Additive explanation following `order`, a permutation of feature indices.
//
// # Safety
// Handles must be live; `order` must point to `order_len` values.
enum IbdStatus ibd_explain_with_order(const struct IbdModel *model,
                                      const struct IbdDataset *ds,
                                      size_t row,
                                      const size_t *order,
                                      size_t order_len,
                                      const struct IbdExplainOptions *options,
                                      struct IbdExplanation **out);

// Uncertainty report over `k` random orders, as JSON.
//
// # Safety
// Handles must be live; `out_json` must be writable.
enum IbdStatus ibd_uncertainty_json(const struct IbdModel *model,
                                    const struct IbdDataset *ds,
                                    size_t row,
                                    size_t k,
                                    uint64_t seed,
                                    const struct IbdExplainOptions *options,
                                    char **out_json);

// # Safety
// `e` must be a live handle; outputs may be null.
enum IbdStatus ibd_explanation_summary(const struct IbdExplanation *e,
                                       double *baseline,
                                       double *prediction,
                                       size_t *n_steps,
                                       size_t *n_pairs);

// Per-feature attributions; fails when a pair step covers two features.
//
// # Safety
// `e` must be a live handle; `out` must hold `len` doubles.
enum IbdStatus ibd_explanation_per_feature(const struct IbdExplanation *e, double *out, size_t len);

// # Safety
// `e` must be a live handle; `out_json` must be writable.
enum IbdStatus ibd_explanation_to_json(const struct IbdExplanation *e, char **out_json);

// Waterfall plot with default colors; `width` 0 keeps the default.
//
// # Safety
// `e` must be a live handle; `out_svg` must be writable.
enum IbdStatus ibd_explanation_to_svg(const struct IbdExplanation *e,
                                      uint32_t width,
                                      char **out_svg);

// # Safety
// `e` must come from this library or be null.
void ibd_explanation_free(struct IbdExplanation *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IBD_H */
