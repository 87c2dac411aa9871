#ifndef GESTURE_H
#define GESTURE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Coordinates per frame in skeleton buffers.
 */
#define GESTURE_FRAME_COORDS 33

typedef enum GestureStatus {
  GESTURE_STATUS_OK = 0,
  GESTURE_STATUS_NULL_POINTER = 1,
  GESTURE_STATUS_INVALID_ARGUMENT = 2,
  GESTURE_STATUS_IO = 3,
  GESTURE_STATUS_PARSE = 4,
  GESTURE_STATUS_SHAPE = 5,
  GESTURE_STATUS_NON_FINITE = 6,
  GESTURE_STATUS_DIVERGED = 7,
  GESTURE_STATUS_MODEL_MISMATCH = 8,
  GESTURE_STATUS_MISSING = 9,
  GESTURE_STATUS_BUFFER_TOO_SMALL = 10,
  GESTURE_STATUS_PANIC = 11,
} GestureStatus;

/*
 A trained network loaded from a model file.
 */
typedef struct GestureModel GestureModel;

/*
 Inclusive frame interval.
 */
typedef struct GesturePeriod {
  size_t start;
  size_t end;
} GesturePeriod;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *gesture_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library from the same thread.
 */
const char *gesture_last_error(void);

/*
 Width of one pose descriptor row.
 */
size_t gesture_descriptor_width(void);

/*
 Loads a model file. On success `*out` owns a handle that must be
 released with [`gesture_model_free`].

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GestureStatus gesture_model_load(const char *path, struct GestureModel **out);

/*
 Releases a handle from [`gesture_model_load`]. NULL is ignored.

 # Safety
 `model` must come from [`gesture_model_load`] and not be freed twice.
 */
void gesture_model_free(struct GestureModel *model);

/*
 Input width the model expects, or 0 for a NULL handle.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t gesture_model_input_width(const struct GestureModel *model);

/*
 Standardized descriptors of a skeleton sequence, using the statistics
 stored in `model`. `out` receives `n_frames * gesture_descriptor_width()`
 values, row-major.

 # Safety
 `coords` must hold `n_frames * 33` values and `out` `out_len` values.
 */
enum GestureStatus gesture_descriptors(const struct GestureModel *model,
                                       const double *coords,
                                       size_t n_frames,
                                       double *out,
                                       size_t out_len);

/*
 Activity periods found by a segmenter model. `threshold` outside (0, 1)
 selects the default. Writes at most `capacity` periods and always sets
 `*count` to the number found; returns `BufferTooSmall` if they did not
 all fit.

 # Safety
 `coords` must hold `n_frames * 33` values, `periods` room for `capacity`
 entries (may be NULL when `capacity` is 0), and `count` be writable.
 */
enum GestureStatus gesture_segment(const struct GestureModel *model,
                                   const double *coords,
                                   size_t n_frames,
                                   double threshold,
                                   struct GesturePeriod *periods,
                                   size_t capacity,
                                   size_t *count);

/*
 Per-frame labels (0 = rest, 1..=20 gestures) from a recurrent labeler
 model. `labels` receives `n_frames` bytes.

 # Safety
 `coords` must hold `n_frames * 33` values and `labels` `n_frames` bytes.
 */
enum GestureStatus gesture_label_sequence(const struct GestureModel *model,
                                          const double *coords,
                                          size_t n_frames,
                                          uint8_t *labels);

/*
 Mean Jaccard index of one sequence over the gesture classes present in
 either labelling. Returns `Missing` when neither contains a gesture.

 # Safety
 `truth` and `predicted` must hold `n_frames` bytes; `out` be writable.
 */
enum GestureStatus gesture_jaccard(const uint8_t *truth,
                                   const uint8_t *predicted,
                                   size_t n_frames,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GESTURE_H */
