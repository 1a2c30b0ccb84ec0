#ifndef AMGA_H
#define AMGA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the numeric values match the command-line exit codes.
 */
typedef enum AmgaStatus {
  AMGA_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or out-of-range index.
   */
  AMGA_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration, shape or contract error.
   */
  AMGA_STATUS_CONFIG = 2,
  /**
   * File system or file format error.
   */
  AMGA_STATUS_IO = 3,
  /**
   * Training or attack produced non-finite values.
   */
  AMGA_STATUS_NUMERIC = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  AMGA_STATUS_INTERNAL = 5,
} AmgaStatus;

/**
 * The outcome of one attack run.
 */
typedef struct AmgaAttack AmgaAttack;

/**
 * A loaded model zoo.
 */
typedef struct AmgaZoo AmgaZoo;

typedef struct AmgaBox {
  double x;
  double y;
  double w;
  double h;
} AmgaBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *amga_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t amga_last_error(char *buf, uintptr_t len);

/**
 * Loads the zoo written by `zoo-train` from directory `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum AmgaStatus amga_zoo_load(const char *dir, struct AmgaZoo **out);

/**
 * # Safety
 * `zoo` must be null or a handle from [`amga_zoo_load`] not yet freed.
 */
void amga_zoo_free(struct AmgaZoo *zoo);

/**
 * Number of models in the zoo; 0 for a null handle.
 *
 * # Safety
 * `zoo` must be null or a live handle.
 */
uintptr_t amga_zoo_len(const struct AmgaZoo *zoo);

/**
 * Input geometry `[channels, height, width]` and class count of model `index`.
 *
 * # Safety
 * `zoo` must be a live handle; `shape` must hold 3 values.
 */
enum AmgaStatus amga_zoo_input_shape(const struct AmgaZoo *zoo,
                                     uintptr_t index,
                                     uintptr_t *shape,
                                     uintptr_t *n_classes);

/**
 * Predicted class of model `index` for each image in a `[batch, C, H, W]`
 * row-major buffer.
 *
 * # Safety
 * `images` must hold `batch·C·H·W` floats and `labels` `batch` slots.
 */
enum AmgaStatus amga_zoo_predict(const struct AmgaZoo *zoo,
                                 uintptr_t index,
                                 const float *images,
                                 uintptr_t batch,
                                 uint32_t *labels);

/**
 * Runs the attack on a labelled batch. `config_json` may be null for the
 * defaults; otherwise it is a JSON object of attack settings.
 *
 * # Safety
 * Buffers as for [`amga_zoo_predict`]; `out` must be writable.
 */
enum AmgaStatus amga_attack_run(const struct AmgaZoo *zoo,
                                const char *config_json,
                                const float *images,
                                const uint32_t *labels,
                                uintptr_t batch,
                                struct AmgaAttack **out);

/**
 * Number of floats in the adversarial batch.
 *
 * # Safety
 * `attack` must be null or a live handle.
 */
uintptr_t amga_attack_len(const struct AmgaAttack *attack);

/**
 * Copies the adversarial batch into `out`, which must hold exactly
 * [`amga_attack_len`] floats.
 *
 * # Safety
 * `attack` must be live; `out` must point to `len` writable floats.
 */
enum AmgaStatus amga_attack_adversarial(const struct AmgaAttack *attack, float *out, uintptr_t len);

/**
 * # Safety
 * `attack` must be null or a handle from [`amga_attack_run`] not yet freed.
 */
void amga_attack_free(struct AmgaAttack *attack);

/**
 * PSNR in dB (peak 1) of two `len`-float images; `INFINITY` when equal.
 *
 * # Safety
 * `a` and `b` must hold `len` floats; `out` must be writable.
 */
enum AmgaStatus amga_psnr(const float *a, const float *b, uintptr_t len, double *out);

/**
 * Mean SSIM of two `[channels, height, width]` images.
 *
 * # Safety
 * `a` and `b` must hold `channels·height·width` floats; `out` must be writable.
 */
enum AmgaStatus amga_ssim(const float *a,
                          const float *b,
                          uintptr_t channels,
                          uintptr_t height,
                          uintptr_t width,
                          double *out);

/**
 * Intersection over union of two boxes; degenerate boxes are errors.
 *
 * # Safety
 * `out` must be writable.
 */
enum AmgaStatus amga_iou(struct AmgaBox a, struct AmgaBox b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMGA_H */
