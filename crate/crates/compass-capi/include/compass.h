#ifndef COMPASS_H
#define COMPASS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible API call.
 */
typedef enum CompassStatus {
  CompassStatus_Ok = 0,
  CompassStatus_NullArgument = 1,
  CompassStatus_InvalidString = 2,
  CompassStatus_LoadFailed = 3,
  CompassStatus_InvalidArgument = 4,
  CompassStatus_RuntimeError = 5,
} CompassStatus;

/**
 * Opaque dataset handle.
 */
typedef struct CompassDataset CompassDataset;

/**
 * Opaque model handle.
 */
typedef struct CompassModel CompassModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *compass_last_error_message(void);

/**
 * Load a model directory. Returns null on failure (see
 * `compass_last_error_message`).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct CompassModel *compass_model_load(const char *path);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from `compass_model_load` and not been freed.
 */
void compass_model_free(struct CompassModel *model);

/**
 * Load a dataset directory. Returns null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct CompassDataset *compass_dataset_load(const char *path);

/**
 * Release a dataset handle. Null is a no-op.
 *
 * # Safety
 * `dataset` must have come from `compass_dataset_load` and not been freed.
 */
void compass_dataset_free(struct CompassDataset *dataset);

/**
 * Number of samples in a dataset.
 *
 * # Safety
 * Both pointers must be valid (handle live, out non-null).
 */
enum CompassStatus compass_dataset_len(const struct CompassDataset *dataset, uintptr_t *out_len);

/**
 * Predicted class for one flattened input of `len` f64 pixels in [0, 1].
 *
 * # Safety
 * `input` must point to `len` readable doubles; handles/outs valid.
 */
enum CompassStatus compass_model_predict(const struct CompassModel *model,
                                         const double *input,
                                         uintptr_t len,
                                         int *out_class);

/**
 * Accuracy of the model over the dataset.
 *
 * # Safety
 * Handles must be live; `out_accuracy` non-null.
 */
enum CompassStatus compass_accuracy(const struct CompassModel *model,
                                    const struct CompassDataset *dataset,
                                    double *out_accuracy);

/**
 * White-box attack success rate for `method` (kebab-case, e.g. "fgsm",
 * "pgd") at the given L-infinity budget with default hyperparameters.
 *
 * # Safety
 * Handles must be live; `method` NUL-terminated; `out_asr` non-null.
 */
enum CompassStatus compass_attack_success_rate(const struct CompassModel *model,
                                               const struct CompassDataset *dataset,
                                               const char *method,
                                               double epsilon,
                                               uint64_t seed,
                                               double *out_asr);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* COMPASS_H */
