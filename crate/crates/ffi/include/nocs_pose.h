#ifndef NOCS_POSE_H
#define NOCS_POSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum NpStatus {
  NP_STATUS_OK = 0,
  NP_STATUS_NULL_POINTER = 1,
  NP_STATUS_INVALID_ARGUMENT = 2,
  NP_STATUS_SHAPE_MISMATCH = 3,
  NP_STATUS_IO = 4,
  NP_STATUS_FORMAT = 5,
  NP_STATUS_EMPTY_INPUT = 6,
  NP_STATUS_DEGENERATE = 7,
  NP_STATUS_NO_VALID_HYPOTHESIS = 8,
  NP_STATUS_RUNTIME = 9,
  NP_STATUS_PANIC = 10,
} NpStatus;

// A loaded checkpoint.
typedef struct NpModel NpModel;

// Inputs for one object: mask and intrinsics plus optional rgb, depth and category.
typedef struct NpRequest NpRequest;

// Outcome of [`np_estimate`].
typedef struct NpResult NpResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes of the last error message on this thread, without the terminator.
size_t np_last_error_length(void);

// Copy the last error message on this thread into `buf` as a NUL-terminated
// string, truncated to `len - 1` bytes. Returns the full message length.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
size_t np_last_error_message(char *buf, size_t len);

// Load a checkpoint (and its sibling feature basis file, if any).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for one write.
enum NpStatus np_model_load(const char *path, struct NpModel **out);

// Release a model; null is ignored.
//
// # Safety
// `model` must come from [`np_model_load`] and not be used afterwards.
void np_model_free(struct NpModel *model);

// Side of the square network input.
//
// # Safety
// `model` must be a live handle; `out` valid for one write.
enum NpStatus np_model_image_size(const struct NpModel *model, size_t *out);

// Category id (`1..`) of a category name known to the model.
//
// # Safety
// `model` must be a live handle, `name` NUL-terminated, `out` valid for one write.
enum NpStatus np_model_category_id(const struct NpModel *model, const char *name, uint32_t *out);

// New request from pinhole intrinsics and a row-major `width × height` mask
// (non-zero = object). All modalities are enabled; ones without inputs are
// nulled at estimation time.
//
// # Safety
// `mask` must be valid for `width * height` bytes; `out` valid for one write.
enum NpStatus np_request_new(size_t width,
                             size_t height,
                             double fx,
                             double fy,
                             double cx,
                             double cy,
                             const uint8_t *mask,
                             struct NpRequest **out);

// Release a request; null is ignored.
//
// # Safety
// `req` must come from [`np_request_new`] and not be used afterwards.
void np_request_free(struct NpRequest *req);

// Attach a row-major interleaved rgb image with values in `[0, 1]`.
//
// # Safety
// `rgb` must be valid for `3 * width * height` floats.
enum NpStatus np_request_set_rgb(struct NpRequest *req, const float *rgb);

// Attach a row-major depth map in metres (0 = missing).
//
// # Safety
// `depth` must be valid for `width * height` floats.
enum NpStatus np_request_set_depth(struct NpRequest *req, const float *depth);

// Set the category id (`1..`), or 0 for none.
//
// # Safety
// `req` must be a live handle.
enum NpStatus np_request_set_category(struct NpRequest *req, uint32_t category);

// Set the number of noise hypotheses and the master seed.
//
// # Safety
// `req` must be a live handle.
enum NpStatus np_request_set_sampling(struct NpRequest *req, size_t n_noises, uint64_t seed);

// Estimate the pose with default options (fast sampling, relative noise bound).
// Modalities with no attached input are disabled. Depth is required.
//
// # Safety
// `model` and `req` must be live handles; `out` valid for one write.
enum NpStatus np_estimate(const struct NpModel *model,
                          const struct NpRequest *req,
                          struct NpResult **out);

// Release a result; null is ignored.
//
// # Safety
// `res` must come from [`np_estimate`] and not be used afterwards.
void np_result_free(struct NpResult *res);

// Selected object-to-camera similarity as a row-major 4×4 matrix, its scale
// and its confidence (inlier rate).
//
// # Safety
// `res` must be a live handle; `matrix` valid for 16 doubles; `scale` and
// `confidence` may be null.
enum NpStatus np_result_pose(const struct NpResult *res,
                             double *matrix,
                             double *scale,
                             double *confidence);

// Number of hypotheses, including failed ones.
//
// # Safety
// `res` must be a live handle; `out` valid for one write.
enum NpStatus np_result_hypothesis_count(const struct NpResult *res, size_t *out);

// Pose of hypothesis `index`. Returns [`NpStatus::NoValidHypothesis`] when
// registration failed for it.
//
// # Safety
// As for [`np_result_pose`].
enum NpStatus np_result_hypothesis(const struct NpResult *res,
                                   size_t index,
                                   double *matrix,
                                   double *confidence);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOCS_POSE_H */
