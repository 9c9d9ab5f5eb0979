/* C interface for the archpred prediction toolkit. */

#ifndef ARCHPRED_H
#define ARCHPRED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum ArchPredStatus {
  ARCH_PRED_STATUS_OK = 0,
  /**
   * A pointer was null or a scalar argument was out of range.
   */
  ARCH_PRED_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The file could not be read.
   */
  ARCH_PRED_STATUS_IO = 2,
  /**
   * The document is not valid JSON for the expected schema.
   */
  ARCH_PRED_STATUS_PARSE = 3,
  /**
   * The model file violates a dimension invariant.
   */
  ARCH_PRED_STATUS_INVALID_MODEL = 4,
  /**
   * The architecture fails validation.
   */
  ARCH_PRED_STATUS_INVALID_ARCHITECTURE = 5,
  /**
   * Unexpected internal failure.
   */
  ARCH_PRED_STATUS_INTERNAL = 6,
} ArchPredStatus;

/**
 * Opaque handle around a loaded predictor model.
 */
typedef struct ArchPredModel ArchPredModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null if
 * none occurred yet. Valid until the next failing call on this thread.
 */
const char *archpred_last_error(void);

/**
 * Library version as a static string.
 */
const char *archpred_version(void);

/**
 * Loads a predictor model file (JSON). On success stores a handle in
 * `out_model`; release it with [`archpred_model_free`].
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out_model` a valid
 * pointer.
 */
enum ArchPredStatus archpred_model_load(const char *path, struct ArchPredModel **out_model);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle returned by [`archpred_model_load`] that has
 * not been freed yet.
 */
void archpred_model_free(struct ArchPredModel *model);

/**
 * Predicts the peak accuracy of the architecture given as a JSON document
 * (`{"v":1,"layers":[...]}`), for a dataset with difficulty `dcn` in
 * [0, 1] and `num_classes` classes. Writes the prediction to
 * `out_accuracy`.
 *
 * # Safety
 * `model` must be a live handle from [`archpred_model_load`];
 * `architecture_json` must be a valid NUL-terminated string;
 * `out_accuracy` must be a valid pointer.
 */
enum ArchPredStatus archpred_predict_json(const struct ArchPredModel *model,
                                          const char *architecture_json,
                                          double dcn,
                                          uint32_t num_classes,
                                          double *out_accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARCHPRED_H */
