#ifndef SEMPROJ_H
#define SEMPROJ_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SemprojStatus {
  SEMPROJ_STATUS_OK = 0,
  SEMPROJ_STATUS_NULL_POINTER = 1,
  SEMPROJ_STATUS_INVALID_ARGUMENT = 2,
  SEMPROJ_STATUS_FUSION_FAILED = 3,
  SEMPROJ_STATUS_PROJECTION_FAILED = 4,
  SEMPROJ_STATUS_METRICS_FAILED = 5,
  SEMPROJ_STATUS_PROMPT_FAILED = 6,
  SEMPROJ_STATUS_BUFFER_TOO_SMALL = 7,
  SEMPROJ_STATUS_PANIC = 8,
} SemprojStatus;

typedef enum SemprojMethod {
  SEMPROJ_METHOD_PCA = 0,
  SEMPROJ_METHOD_MDS = 1,
  SEMPROJ_METHOD_ISOMAP = 2,
  SEMPROJ_METHOD_TSNE = 3,
} SemprojMethod;

/**
 * Opaque 2D layout.
 */
typedef struct SemprojLayout SemprojLayout;

/**
 * Projection options. Zero values select the defaults.
 */
typedef struct SemprojProjectOptions {
  enum SemprojMethod method;
  uint64_t seed;
  double perplexity;
  size_t iterations;
  size_t k_neighbors;
} SemprojProjectOptions;

typedef struct SemprojMetrics {
  double trustworthiness;
  double continuity;
  double shepard_rho;
  double silhouette;
  size_t k;
} SemprojMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *semproj_last_error(void);

/**
 * Library version as a static string.
 */
const char *semproj_version(void);

/**
 * Blends row-major `n × dim` data and label matrices into `out`
 * (`n × dim` doubles): `out = alpha·x + (1 − alpha)·y`, with rows
 * L2-normalized first when `normalize` is set.
 *
 * # Safety
 * `data` and `labels` must point to `n·dim` floats and `out` to `n·dim`
 * writable doubles.
 */
enum SemprojStatus semproj_fuse(const float *data,
                                const float *labels,
                                size_t n,
                                size_t dim,
                                double alpha,
                                bool normalize,
                                double *out);

/**
 * Projects row-major `n × dim` points to 2D. On success `*out` receives a
 * new layout handle.
 *
 * # Safety
 * `x` must point to `n·dim` doubles, `options` to a valid struct and `out`
 * to writable storage for one pointer.
 */
enum SemprojStatus semproj_project(const double *x,
                                   size_t n,
                                   size_t dim,
                                   const struct SemprojProjectOptions *options,
                                   struct SemprojLayout **out);

/**
 * Number of points in a layout (0 for NULL).
 *
 * # Safety
 * `layout` must be NULL or a live handle.
 */
size_t semproj_layout_len(const struct SemprojLayout *layout);

/**
 * Whether the projector reported convergence (false for NULL).
 *
 * # Safety
 * `layout` must be NULL or a live handle.
 */
bool semproj_layout_converged(const struct SemprojLayout *layout);

/**
 * Copies the layout's coordinates into `out` as `x0, y0, x1, y1, …`;
 * `capacity` counts doubles and must be at least `2·len`.
 *
 * # Safety
 * `layout` must be a live handle and `out` must point to `capacity`
 * writable doubles.
 */
enum SemprojStatus semproj_layout_points(const struct SemprojLayout *layout,
                                         double *out,
                                         size_t capacity);

/**
 * Releases a layout handle. NULL is ignored.
 *
 * # Safety
 * `layout` must be NULL or a handle not yet freed.
 */
void semproj_layout_free(struct SemprojLayout *layout);

/**
 * Trustworthiness, continuity, Shepard correlation and silhouette of
 * `layout` against the row-major `n × dim` points `x`, with integer class
 * `labels` (one per point) and neighborhood size `k`.
 *
 * # Safety
 * `x` must point to `n·dim` doubles, `labels` to `n` ints, `layout` must be
 * a live handle and `out` writable.
 */
enum SemprojStatus semproj_metrics(const double *x,
                                   size_t n,
                                   size_t dim,
                                   const struct SemprojLayout *layout,
                                   const int32_t *labels,
                                   size_t k,
                                   struct SemprojMetrics *out);

/**
 * Renders a built-in guiding prompt. On success `*out` receives a string
 * to release with [`semproj_string_free`].
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum SemprojStatus semproj_prompt_render(const char *name, char **out);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a string from this library not yet freed.
 */
void semproj_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMPROJ_H */
