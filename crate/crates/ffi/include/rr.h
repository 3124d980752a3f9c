#ifndef RR_H
#define RR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RR_CONFIG_222 0

#define RR_CONFIG_32 1

#define RR_CONFIG_4 2

#define RR_CONFIG_22 3

typedef enum RrStatus {
  RR_STATUS_OK = 0,
  RR_STATUS_NULL_POINTER = 1,
  RR_STATUS_INVALID_INPUT = 2,
  RR_STATUS_BUFFER_TOO_SMALL = 3,
  RR_STATUS_NO_REAL_ROOT = 4,
  RR_STATUS_DEGENERATE_ALPHA = 5,
  RR_STATUS_COLLINEAR_FRAME = 6,
  RR_STATUS_ALL_ZERO_COORDINATES = 7,
  RR_STATUS_WRONG_SAMPLE_SIZE = 8,
  RR_STATUS_DEGENERATE_SAMPLE = 9,
  RR_STATUS_RANK_DEFICIENT_TEMPLATE = 10,
  RR_STATUS_INSUFFICIENT_DATA = 11,
  RR_STATUS_NO_VALID_MODEL = 12,
  RR_STATUS_MISSING_TEMPLATE = 13,
  RR_STATUS_IO = 14,
  RR_STATUS_FORMAT = 15,
  RR_STATUS_UNSUPPORTED_VERSION = 16,
  RR_STATUS_INTERNAL = 17,
} RrStatus;

/**
 * Opaque handle owning a set of solver templates.
 */
typedef struct RrSolver RrSolver;

typedef struct RrFrame {
  double pts[6];
} RrFrame;

typedef struct RrModel {
  double lambda;
  double l1;
  double l2;
} RrModel;

typedef struct RrCandidate {
  struct RrModel model;
  double residual;
  /**
   * Nonzero when the distortion lies in the feasible range.
   */
  int32_t feasible;
} RrCandidate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code; never null.
 */
const char *rr_status_message(enum RrStatus status);

/**
 * Creates a solver with the built-in templates.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum RrStatus rr_solver_new(struct RrSolver **out);

/**
 * Creates a solver from a template directory, falling back to the built-in
 * templates for missing configurations.
 *
 * # Safety
 * `dir` must be a NUL-terminated UTF-8 path; `out` must be valid for writes.
 */
enum RrStatus rr_solver_from_dir(const char *dir, struct RrSolver **out);

/**
 * Releases a handle from [`rr_solver_new`] or [`rr_solver_from_dir`]; null is ignored.
 *
 * # Safety
 * `solver` must not be used afterwards.
 */
void rr_solver_free(struct RrSolver *solver);

/**
 * Solves one minimal sample. Frames are in group order for the
 * configuration. `fixed_lambda` is read only by `RR_CONFIG_22`. When more
 * candidates exist than `capacity`, the best ones are written and
 * `RR_STATUS_BUFFER_TOO_SMALL` is returned with the full count in `n_out`.
 *
 * # Safety
 * `frames` must point to `n_frames` frames, `out` to `capacity` candidates.
 */
enum RrStatus rr_solve(const struct RrSolver *solver,
                       uint32_t config,
                       const struct RrFrame *frames,
                       size_t n_frames,
                       double fixed_lambda,
                       struct RrCandidate *out,
                       size_t capacity,
                       size_t *n_out);

/**
 * Robust estimation over frames with cluster ids `0..n_clusters`.
 *
 * # Safety
 * `frames` and `clusters` must point to `n` elements; outputs must be valid.
 */
enum RrStatus rr_ransac(const struct RrSolver *solver,
                        uint32_t config,
                        const struct RrFrame *frames,
                        const size_t *clusters,
                        size_t n,
                        size_t iterations,
                        uint64_t seed,
                        double tau_s,
                        double fixed_lambda,
                        struct RrModel *out,
                        double *score);

/**
 * Division-model undistortion; `out` receives homogeneous `(x, y, w)`.
 *
 * # Safety
 * `point` must hold 2 doubles and `out` 3.
 */
enum RrStatus rr_undistort(double lambda, const double *point, double *out);

/**
 * Inverse of [`rr_undistort`] for an inhomogeneous undistorted point.
 *
 * # Safety
 * `point` must hold 2 doubles and `out` 2.
 */
enum RrStatus rr_distort(double lambda, const double *point, double *out);

/**
 * Undistorts and rectifies a distorted point to inhomogeneous coordinates.
 *
 * # Safety
 * `model` must be valid, `point` must hold 2 doubles and `out` 2.
 */
enum RrStatus rr_rectify_point(const struct RrModel *model, const double *point, double *out);

/**
 * Signed area scale of a frame after rectification.
 *
 * # Safety
 * `model`, `frame` and `out` must be valid.
 */
enum RrStatus rr_rectified_scale(const struct RrModel *model,
                                 const struct RrFrame *frame,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RR_H */
