#ifndef BOWMOTION_H
#define BOWMOTION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BmStatus {
  BM_STATUS_OK = 0,
  BM_STATUS_INVALID_INPUT = 1,
  BM_STATUS_SHAPE = 2,
  BM_STATUS_IO = 3,
  BM_STATUS_FORMAT = 4,
  BM_STATUS_NON_FINITE = 5,
  BM_STATUS_NULL_POINTER = 6,
  BM_STATUS_PANIC = 7,
} BmStatus;

/**
 * Row-major matrix of doubles.
 */
typedef struct BmMatrix BmMatrix;

/**
 * Loaded generator weights.
 */
typedef struct BmModel BmModel;

/**
 * Evaluation scores, in report column order.
 */
typedef struct BmMetrics {
  double l1_avg;
  double l1_hand_avg;
  double pck;
  double bow_x;
  double bow_y;
  double bow_z;
  double bow_avg;
  double cosine_similarity;
} BmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bm_version(void);

/**
 * Message for the last failed call on this thread, or "" after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *bm_last_error(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 */
enum BmStatus bm_matrix_new(size_t rows, size_t cols, const double *data, struct BmMatrix **out);

size_t bm_matrix_rows(const struct BmMatrix *m);

size_t bm_matrix_cols(const struct BmMatrix *m);

/**
 * Copies the matrix into `dst`, which must hold `len >= rows * cols` values.
 */
enum BmStatus bm_matrix_copy(const struct BmMatrix *m, double *dst, size_t len);

void bm_matrix_free(struct BmMatrix *m);

/**
 * 28-column feature frames of a mono clip at 30 frames per second.
 */
enum BmStatus bm_features_from_samples(const float *samples,
                                       size_t len,
                                       uint32_t sample_rate,
                                       struct BmMatrix **out);

enum BmStatus bm_features_from_wav(const char *path, struct BmMatrix **out);

enum BmStatus bm_model_load(const char *path, struct BmModel **out);

/**
 * Generates an `L x 45` skeleton from `L x 28` raw features.
 */
enum BmStatus bm_model_generate(const struct BmModel *model,
                                const struct BmMatrix *features,
                                struct BmMatrix **out);

void bm_model_free(struct BmModel *m);

/**
 * Scores a predicted skeleton against ground truth with default options.
 */
enum BmStatus bm_metrics_evaluate(const struct BmMatrix *pred,
                                  const struct BmMatrix *gt,
                                  struct BmMetrics *out);

/**
 * Warmup then inverse-square-root learning rate at step `step >= 1`.
 */
enum BmStatus bm_lr_schedule(uint64_t step, size_t d_model, double k, uint64_t warmup, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOWMOTION_H */
