/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef PERSEMON_H
#define PERSEMON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PersemonStatus {
  PERSEMON_STATUS_OK = 0,
  /**
   * Unclassified failure.
   */
  PERSEMON_STATUS_ERROR = 1,
  /**
   * Invalid configuration or checkpoint/architecture mismatch.
   */
  PERSEMON_STATUS_CONFIG = 2,
  /**
   * Non-finite values.
   */
  PERSEMON_STATUS_NUMERICAL = 3,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  PERSEMON_STATUS_INVALID_ARGUMENT = 5,
  /**
   * Shapes or lengths do not fit.
   */
  PERSEMON_STATUS_DIMENSION = 6,
  /**
   * A metric is undefined for the input, e.g. R² of constant labels.
   */
  PERSEMON_STATUS_UNDEFINED = 7,
  PERSEMON_STATUS_IO = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  PERSEMON_STATUS_PANIC = 9,
} PersemonStatus;

/**
 * Loaded dataset directory.
 */
typedef struct PersemonDataset PersemonDataset;

/**
 * Trained or freshly initialized network.
 */
typedef struct PersemonModel PersemonModel;

/**
 * Mean squared errors reported by [`persemon_evaluate`].
 */
typedef struct PersemonEvalMse {
  double pam;
  double ram;
  double fused;
  double emotion;
} PersemonEvalMse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *persemon_last_error(void);

/**
 * Fresh model with the `micro` or `full` preset.
 *
 * # Safety
 * `preset` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PersemonStatus persemon_model_new(const char *preset,
                                       uint64_t seed,
                                       struct PersemonModel **out);

/**
 * Loads the model stored in a checkpoint directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PersemonStatus persemon_model_load(const char *dir, struct PersemonModel **out);

/**
 * # Safety
 * `model` must come from a constructor and not be used afterwards.
 */
void persemon_model_free(struct PersemonModel *model);

/**
 * Side length of the square single-channel input images.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum PersemonStatus persemon_model_input_size(const struct PersemonModel *model, size_t *out);

/**
 * Length of one feature vector.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum PersemonStatus persemon_model_feature_dim(const struct PersemonModel *model, size_t *out);

/**
 * Backbone features of `n` row-major `S x S` images into `out[n * D]`.
 *
 * # Safety
 * `images` holds `n * S * S` values and `out` has room for `n * D`.
 */
enum PersemonStatus persemon_model_features(const struct PersemonModel *model,
                                            const double *images_ptr,
                                            size_t n,
                                            double *out);

/**
 * Arousal and valence of `n` images into `out[n * 2]`.
 *
 * # Safety
 * `images` holds `n * S * S` values and `out` has room for `2 * n`.
 */
enum PersemonStatus persemon_model_emotion(const struct PersemonModel *model,
                                           const double *images_ptr,
                                           size_t n,
                                           double *out);

/**
 * Big-Five traits of one video from its `k` sampled frames. Writes five
 * values each to `pam`, `ram` and `fused`; `fused` weights the two paths
 * by `w_pam : w_ram`. Any output pointer may be null to skip it.
 *
 * # Safety
 * `frames` holds `k * S * S` values; non-null outputs have room for 5.
 */
enum PersemonStatus persemon_model_personality(const struct PersemonModel *model,
                                               const double *frames,
                                               size_t k,
                                               double w_pam,
                                               double w_ram,
                                               double *pam,
                                               double *ram,
                                               double *fused);

/**
 * Loads a dataset directory written by `persemon gen-data`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PersemonStatus persemon_dataset_load(const char *dir, struct PersemonDataset **out);

/**
 * # Safety
 * `ds` must come from [`persemon_dataset_load`] and not be used afterwards.
 */
void persemon_dataset_free(struct PersemonDataset *ds);

/**
 * Held-out sizes: emotion frames and personality videos.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PersemonStatus persemon_dataset_eval_counts(const struct PersemonDataset *ds,
                                                 size_t *n_emotion,
                                                 size_t *n_videos);

/**
 * Evaluates `model` on the held-out splits with `k` frames per video.
 * Writes the mean MSE of the PAM, RAM and fused personality paths and the
 * emotion MSE.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PersemonStatus persemon_evaluate(const struct PersemonModel *model,
                                      const struct PersemonDataset *ds,
                                      size_t k,
                                      uint64_t seed,
                                      struct PersemonEvalMse *out_mse);

/**
 * `1 - mean |y - p|` over `n` pairs.
 *
 * # Safety
 * `labels` and `preds` hold `n` values; `out` is valid.
 */
enum PersemonStatus persemon_mean_accuracy(const double *labels,
                                           const double *preds,
                                           size_t n,
                                           double *out);

/**
 * Coefficient of determination over `n` pairs.
 *
 * # Safety
 * `labels` and `preds` hold `n` values; `out` is valid.
 */
enum PersemonStatus persemon_r_squared(const double *labels,
                                       const double *preds,
                                       size_t n,
                                       double *out);

/**
 * Mean squared error over `n` pairs.
 *
 * # Safety
 * `labels` and `preds` hold `n` values; `out` is valid.
 */
enum PersemonStatus persemon_mse(const double *labels, const double *preds, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERSEMON_H */
