#ifndef CUTER_H
#define CUTER_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum CuterKernelKind {
  CUTER_KERNEL_KIND_GAUSSIAN = 0,
  CUTER_KERNEL_KIND_COSINE_CONTINUOUS = 1,
  CUTER_KERNEL_KIND_COSINE_BINARIZED = 2,
} CuterKernelKind;

typedef enum CuterStatus {
  CUTER_STATUS_OK = 0,
  CUTER_STATUS_NULL_POINTER = 1,
  CUTER_STATUS_INVALID_ARGUMENT = 2,
  CUTER_STATUS_FORMAT = 3,
  CUTER_STATUS_NUMERICAL = 4,
  CUTER_STATUS_IO = 5,
  CUTER_STATUS_PANIC = 6,
} CuterStatus;

/**
 * Opaque MaskCut result.
 */
typedef struct CuterCutResult CuterCutResult;

/**
 * Opaque patch feature map.
 */
typedef struct CuterFeatureMap CuterFeatureMap;

/**
 * Similarity kernel. A `sigma` of zero or less selects the median
 * heuristic.
 */
typedef struct CuterKernel {
  enum CuterKernelKind kind;
  double sigma;
  double tau_sim;
  double epsilon_floor;
} CuterKernel;

/**
 * Inclusive patch-coordinate box.
 */
typedef struct CuterBox {
  uint32_t h1;
  uint32_t w1;
  uint32_t h2;
  uint32_t w2;
} CuterBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cuter_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * plus one, or 0 when there is no message.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
uintptr_t cuter_last_error_message(char *buf, uintptr_t len);

/**
 * Gaussian kernel with the median-heuristic bandwidth.
 */
struct CuterKernel cuter_kernel_default(void);

/**
 * Copies `len = grid_h * grid_w * dim` values in patch-major order.
 *
 * # Safety
 * `data` must be valid for `len` reads and `out` for one write.
 */
enum CuterStatus cuter_feature_map_new(uintptr_t grid_h,
                                       uintptr_t grid_w,
                                       uintptr_t dim,
                                       const double *data,
                                       uintptr_t len,
                                       struct CuterFeatureMap **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum CuterStatus cuter_feature_map_read_fpm1(const char *path, struct CuterFeatureMap **out);

/**
 * # Safety
 * `map` must come from this library and `path` be NUL-terminated.
 */
enum CuterStatus cuter_feature_map_write_fpm1(const struct CuterFeatureMap *map, const char *path);

/**
 * # Safety
 * `map` must come from this library; the out pointers must be valid.
 */
enum CuterStatus cuter_feature_map_shape(const struct CuterFeatureMap *map,
                                         uintptr_t *grid_h,
                                         uintptr_t *grid_w,
                                         uintptr_t *dim);

/**
 * # Safety
 * `map` must be null or come from this library, and not be used again.
 */
void cuter_feature_map_free(struct CuterFeatureMap *map);

/**
 * Second smallest eigenvalue of `D - A` for the map's patch graph.
 *
 * # Safety
 * `map` must come from this library; `kernel` and `out` must be valid.
 */
enum CuterStatus cuter_fiedler_value(const struct CuterFeatureMap *map,
                                     const struct CuterKernel *kernel,
                                     double *out);

/**
 * Mean Fiedler value over `count` maps; maps whose graph cannot be built
 * are skipped.
 *
 * # Safety
 * `maps` must point to `count` handles from this library.
 */
enum CuterStatus cuter_average_fiedler(const struct CuterFeatureMap *const *maps,
                                       uintptr_t count,
                                       const struct CuterKernel *kernel,
                                       double *out);

/**
 * # Safety
 * `map` must come from this library; `kernel` and `out` must be valid.
 */
enum CuterStatus cuter_maskcut(const struct CuterFeatureMap *map,
                               const struct CuterKernel *kernel,
                               uintptr_t n_iters,
                               struct CuterCutResult **out);

/**
 * Number of iterations in a cut result; 0 for a null handle.
 *
 * # Safety
 * `result` must be null or come from this library.
 */
uintptr_t cuter_cut_result_len(const struct CuterCutResult *result);

/**
 * Box and NCut energy of iteration `index`.
 *
 * # Safety
 * `result` must come from this library; the out pointers must be valid.
 */
enum CuterStatus cuter_cut_result_get(const struct CuterCutResult *result,
                                      uintptr_t index,
                                      struct CuterBox *bbox,
                                      double *energy);

/**
 * # Safety
 * `result` must be null or come from this library, and not be used again.
 */
void cuter_cut_result_free(struct CuterCutResult *result);

/**
 * Runs one continual learning simulation and writes its artifacts to
 * `out_dir`. A null `config_json` uses the defaults.
 *
 * # Safety
 * `config_json` must be null or NUL-terminated; `out_dir` NUL-terminated.
 */
enum CuterStatus cuter_simulate(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUTER_H */
