/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef ASDN_H
#define ASDN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum AsdnStatus {
  ASDN_STATUS_OK = 0,
  ASDN_STATUS_NULL_POINTER = 1,
  ASDN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  ASDN_STATUS_IO = 3,
  /**
   * Unsupported or corrupt image data.
   */
  ASDN_STATUS_IMAGE = 4,
  ASDN_STATUS_CHECKPOINT = 5,
  ASDN_STATUS_SHAPE_MISMATCH = 6,
  /**
   * The output buffer is too small.
   */
  ASDN_STATUS_BUFFER_TOO_SMALL = 7,
  ASDN_STATUS_INTERNAL = 8,
  ASDN_STATUS_PANIC = 9,
} AsdnStatus;

/**
 * A planar float image with values nominally in `[0, 1]`. Opaque to C.
 */
typedef struct AsdnImage AsdnImage;

/**
 * A loaded network. Opaque to C.
 */
typedef struct AsdnModel AsdnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *asdn_version(void);

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into the library on this
 * thread.
 */
const char *asdn_last_error(void);

/**
 * Loads a checkpoint into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AsdnStatus asdn_model_load(const char *path, struct AsdnModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`asdn_model_load`] not yet freed.
 */
void asdn_model_free(struct AsdnModel *model);

/**
 * Number of pyramid levels of a model.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum AsdnStatus asdn_model_level_count(const struct AsdnModel *model, size_t *out);

/**
 * Creates an image from planar float data (`channels * height * width`
 * values, channel-major).
 *
 * # Safety
 * `data` must point to that many readable floats; `out` must be writable.
 */
enum AsdnStatus asdn_image_new(size_t channels,
                               size_t height,
                               size_t width,
                               const float *data,
                               struct AsdnImage **out);

/**
 * Reads a PNG file as a 3-channel image.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AsdnStatus asdn_image_load(const char *path, struct AsdnImage **out);

/**
 * Writes an image as an 8-bit PNG.
 *
 * # Safety
 * `image` must be a live handle; `path` a NUL-terminated string.
 */
enum AsdnStatus asdn_image_save(const struct AsdnImage *image, const char *path);

/**
 * Reports the dimensions of an image. Any output pointer may be null.
 *
 * # Safety
 * `image` must be a live handle; non-null outputs must be writable.
 */
enum AsdnStatus asdn_image_dims(const struct AsdnImage *image,
                                size_t *channels,
                                size_t *height,
                                size_t *width);

/**
 * Copies the planar data of an image into `out`, which holds `capacity`
 * floats.
 *
 * # Safety
 * `image` must be a live handle; `out` must have room for `capacity` floats.
 */
enum AsdnStatus asdn_image_read(const struct AsdnImage *image, float *out, size_t capacity);

/**
 * Releases an image. Null is ignored.
 *
 * # Safety
 * `image` must be null or a live handle not yet freed.
 */
void asdn_image_free(struct AsdnImage *image);

/**
 * Upscales `input` by `scale`. With a null `model` the result is plain
 * bicubic; otherwise the model runs once per recursive deployment step.
 *
 * # Safety
 * `model` must be null or a live handle; `input` a live handle; `out`
 * writable.
 */
enum AsdnStatus asdn_upscale(const struct AsdnModel *model,
                             const struct AsdnImage *input,
                             double scale,
                             struct AsdnImage **out);

/**
 * Loads a PNG, upscales it as [`asdn_upscale`] does and writes a PNG.
 *
 * # Safety
 * `model` must be null or a live handle; both paths NUL-terminated strings.
 */
enum AsdnStatus asdn_upscale_file(const struct AsdnModel *model,
                                  const char *input,
                                  const char *output,
                                  double scale);

/**
 * Writes the recursive deployment ratios for `scale` into `steps`. `count`
 * receives the number of ratios even when `capacity` is too small.
 *
 * # Safety
 * `steps` must have room for `capacity` doubles (it may be null when
 * `capacity` is 0); `count` must be writable.
 */
enum AsdnStatus asdn_plan(double scale, double *steps, size_t capacity, size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASDN_H */
