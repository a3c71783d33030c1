#ifndef COAE_H
#define COAE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CoaeStatus {
  COAE_STATUS_OK = 0,
  COAE_STATUS_NULL_POINTER = 1,
  COAE_STATUS_INVALID_ARGUMENT = 2,
  COAE_STATUS_IO = 3,
  COAE_STATUS_IMAGE = 4,
  COAE_STATUS_FORMAT = 5,
  COAE_STATUS_CHECKPOINT = 6,
  COAE_STATUS_PANIC = 7,
} CoaeStatus;

// Opaque predictor handle.
typedef struct CoaePredictor CoaePredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a predictor from checkpoint files. `cae_path` or `dae_path` may be
// null when the VISOR head does not use that encoder.
//
// # Safety
// Paths must be null or NUL-terminated strings; `out` must be writable.
enum CoaeStatus coae_predictor_load(const char *cae_path,
                                    const char *dae_path,
                                    const char *visor_path,
                                    struct CoaePredictor **out);

// Releases a handle from [`coae_predictor_load`]. Null is a no-op.
//
// # Safety
// `p` must come from `coae_predictor_load` and not be used afterwards.
void coae_predictor_free(struct CoaePredictor *p);

// Scores interleaved RGB floats in `[0, 1]`, row-major, `width * height * 3`
// values. The score is in normalized MOS units; see
// [`coae_predictor_mos_range`] to map it back.
//
// # Safety
// `rgb` must point to `width * height * 3` floats; `score` must be writable.
enum CoaeStatus coae_predict_rgb(struct CoaePredictor *p,
                                 const float *rgb,
                                 size_t width,
                                 size_t height,
                                 double *score);

// Scores an image file (PNG).
//
// # Safety
// `path` must be a NUL-terminated string; `score` must be writable.
enum CoaeStatus coae_predict_file(struct CoaePredictor *p, const char *path, double *score);

// MOS range seen in training; `mos = min + score * (max - min)`.
//
// # Safety
// `p` must be a live handle; outputs must be writable.
enum CoaeStatus coae_predictor_mos_range(const struct CoaePredictor *p, double *min, double *max);

// Length of the quality feature vector the head consumes.
//
// # Safety
// `p` must be a live handle; `dim` must be writable.
enum CoaeStatus coae_predictor_feature_dim(const struct CoaePredictor *p, size_t *dim);

// Spearman rank correlation of two length-`n` arrays.
//
// # Safety
// `a` and `b` must point to `n` doubles; `out` must be writable.
enum CoaeStatus coae_srcc(const double *a, const double *b, size_t n, double *out);

// Pearson linear correlation of two length-`n` arrays.
//
// # Safety
// `a` and `b` must point to `n` doubles; `out` must be writable.
enum CoaeStatus coae_plcc(const double *a, const double *b, size_t n, double *out);

// Message of the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *coae_last_error(void);

// Library version as a static NUL-terminated string.
const char *coae_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COAE_H */
