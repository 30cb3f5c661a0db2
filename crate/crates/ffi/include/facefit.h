#ifndef FACEFIT_H
#define FACEFIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_POINTER = 1,
  FF_STATUS_INVALID_ARGUMENT = 2,
  FF_STATUS_IO = 3,
  FF_STATUS_FORMAT = 4,
  FF_STATUS_DIMENSION_MISMATCH = 5,
  FF_STATUS_NO_CORRESPONDENCES = 6,
  FF_STATUS_DEGENERATE = 7,
  FF_STATUS_PANIC = 99,
} FfStatus;

/**
 * Opaque single-image fit result.
 */
typedef struct FfFitResult FfFitResult;

/**
 * Opaque morphable model.
 */
typedef struct FfModel FfModel;

/**
 * Pinhole camera, same fields as the camera JSON sidecar.
 */
typedef struct FfCamera {
  double rotation[3];
  double translation[3];
  double focal_length;
  double principal_point[2];
} FfCamera;

/**
 * Benchmark metrics of one evaluation (millimetres).
 */
typedef struct FfMetrics {
  double l1_mm;
  double l2_mm;
  double nc;
  double recall_2_5;
  size_t points;
} FfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in
 * bytes, excluding the terminator; 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ff_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ff_version(void);

/**
 * Loads a P3DM model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FfStatus ff_model_load(const char *path, struct FfModel **out);

/**
 * The built-in synthetic head model.
 *
 * # Safety
 * `out` must be writable.
 */
enum FfStatus ff_model_sphere_head(struct FfModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void ff_model_free(struct FfModel *model);

/**
 * Writes vertex, triangle, identity and expression counts. Any output
 * pointer may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null outputs must be writable.
 */
enum FfStatus ff_model_dims(const struct FfModel *model,
                            size_t *n_vertices,
                            size_t *n_triangles,
                            size_t *n_id,
                            size_t *n_ex);

/**
 * Posed vertices for the given coefficients, written as `x y z` triples
 * into `out_xyz` (length `3 * n_vertices`).
 *
 * # Safety
 * Array arguments must hold the stated number of elements.
 */
enum FfStatus ff_model_forward(const struct FfModel *model,
                               const double *z_id,
                               size_t n_id,
                               const double *z_ex,
                               size_t n_ex,
                               const double *jaw_theta,
                               double *out_xyz,
                               size_t out_len);

/**
 * Projects `n` points (`x y z` triples) to pixels (`u v` pairs) and depths.
 *
 * # Safety
 * Array arguments must hold the stated number of elements.
 */
enum FfStatus ff_project(const double *points_xyz,
                         size_t n,
                         const struct FfCamera *camera,
                         double *out_uv,
                         double *out_depth);

/**
 * Fits the model to a uv map, normal map and mask on disk. `config_path`
 * may be null for defaults.
 *
 * # Safety
 * Paths must be null or NUL-terminated; `out` must be writable.
 */
enum FfStatus ff_fit_image_files(const struct FfModel *model,
                                 const char *uv_path,
                                 const char *normal_path,
                                 const char *mask_path,
                                 const char *config_path,
                                 struct FfFitResult **out);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
void ff_fit_result_free(struct FfFitResult *result);

/**
 * Fitted camera.
 *
 * # Safety
 * `result` must be a live handle; `out` writable.
 */
enum FfStatus ff_fit_result_camera(const struct FfFitResult *result, struct FfCamera *out);

/**
 * Fitted coefficients. Lengths must match the model dimensions.
 *
 * # Safety
 * Output arrays must hold the stated number of elements.
 */
enum FfStatus ff_fit_result_face(const struct FfFitResult *result,
                                 double *z_id,
                                 size_t n_id,
                                 double *z_ex,
                                 size_t n_ex,
                                 double *jaw_theta);

/**
 * Final energy, and the trace length (steps) when `steps` is non-null.
 *
 * # Safety
 * `result` must be a live handle; non-null outputs writable.
 */
enum FfStatus ff_fit_result_energy(const struct FfFitResult *result, double *energy, size_t *steps);

/**
 * Aligns a predicted OBJ to a GT PLY with landmark pairs and ICP, then
 * computes metrics. Scales convert both inputs to millimetres.
 *
 * # Safety
 * Paths must be NUL-terminated; `out` writable.
 */
enum FfStatus ff_evaluate_files(const char *pred_obj,
                                const char *gt_ply,
                                const char *landmarks_json,
                                double pred_scale,
                                double gt_scale,
                                struct FfMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEFIT_H */
