#ifndef EVNF_H
#define EVNF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum EvnfStatus {
  EVNF_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  EVNF_STATUS_NULL_POINTER = 1,
  /**
   * Invalid arguments, malformed files or unreadable paths.
   */
  EVNF_STATUS_INVALID_INPUT = 2,
  /**
   * Degenerate or insufficient data for the requested estimate.
   */
  EVNF_STATUS_DEGENERATE = 3,
  /**
   * Numerical failure inside a solver.
   */
  EVNF_STATUS_NUMERICAL = 4,
  /**
   * The output buffer is NULL or too small; the required length was written.
   */
  EVNF_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  EVNF_STATUS_INTERNAL = 6,
} EvnfStatus;

/**
 * Degeneracy of a homography decomposition.
 */
typedef enum EvnfHomographyDegeneracy {
  EVNF_HOMOGRAPHY_DEGENERACY_NONE = 0,
  /**
   * No plane-induced part; only `omega` is meaningful.
   */
  EVNF_HOMOGRAPHY_DEGENERACY_PURE_ROTATION = 1,
  /**
   * Plane normal parallel to the translation; candidates are not returned.
   */
  EVNF_HOMOGRAPHY_DEGENERACY_RANK_ONE = 2,
} EvnfHomographyDegeneracy;

/**
 * Problem families understood by [`evnf_solve`].
 */
typedef enum EvnfModelKind {
  /**
   * Per-observation full flow; needs the camera velocity.
   */
  EVNF_MODEL_KIND_OPTICAL_FLOW = 0,
  /**
   * Per-observation depth; needs the camera velocity.
   */
  EVNF_MODEL_KIND_DEPTH = 1,
  EVNF_MODEL_KIND_ANGULAR_VELOCITY = 2,
  /**
   * Camera velocity; needs per-observation depths.
   */
  EVNF_MODEL_KIND_SIX_DOF = 3,
  EVNF_MODEL_KIND_DIFF_HOMOGRAPHY = 4,
} EvnfModelKind;

/**
 * Opaque solver result.
 */
typedef struct EvnfFit EvnfFit;

/**
 * Opaque set of normal-flow observations, optionally with depths.
 */
typedef struct EvnfObservations EvnfObservations;

/**
 * Opaque time surface.
 */
typedef struct EvnfTimeSurface EvnfTimeSurface;

typedef struct EvnfRansacConfig {
  /**
   * Inlier threshold on the normal-flow residual, calibrated units^2/s^2.
   */
  double threshold;
  size_t max_iterations;
  double confidence;
  uint64_t seed;
  /**
   * Worker threads; 0 uses the shared pool.
   */
  size_t threads;
} EvnfRansacConfig;

/**
 * Polarity filter: 0 both, 1 positive only, -1 negative only.
 */
typedef struct EvnfExtractionConfig {
  uint32_t spatial_window;
  double temporal_window;
  double plane_ransac_thresh;
  size_t plane_iterations;
  size_t min_support;
  double max_flow;
  double min_gradient;
  uint64_t seed;
  size_t threads;
  int32_t polarity;
} EvnfExtractionConfig;

/**
 * One normal-flow observation in calibrated coordinates.
 */
typedef struct EvnfObservation {
  double x;
  double y;
  double nx;
  double ny;
  double t;
} EvnfObservation;

typedef struct EvnfIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} EvnfIntrinsics;

/**
 * One candidate motion/structure explanation of a differential homography.
 */
typedef struct EvnfPlanarCandidate {
  double omega[3];
  double nu_over_d[3];
  double normal[3];
} EvnfPlanarCandidate;

typedef struct EvnfHomographyResult {
  /**
   * Removed multiple of the identity.
   */
  double epsilon;
  /**
   * Row-major true differential homography.
   */
  double h_d[9];
  enum EvnfHomographyDegeneracy degeneracy;
  /**
   * Valid when `degeneracy` is `None`.
   */
  struct EvnfPlanarCandidate candidates[2];
  /**
   * Valid when `degeneracy` is `PureRotation`.
   */
  double omega[3];
} EvnfHomographyResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *evnf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evnf_version(void);

struct EvnfRansacConfig evnf_ransac_config_default(void);

struct EvnfExtractionConfig evnf_extraction_config_default(void);

/**
 * Builds an observation set from `count` calibrated observations.
 *
 * # Safety
 * `items` must point to `count` readable values; `out` must be writable.
 */
enum EvnfStatus evnf_observations_new(const struct EvnfObservation *items,
                                      size_t count,
                                      struct EvnfObservations **out);

/**
 * Reads a normal-flow CSV file. A `depth` column, if present, is attached.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `intrinsics` and `out` must be valid.
 */
enum EvnfStatus evnf_observations_read_csv(const char *path,
                                           const struct EvnfIntrinsics *intrinsics,
                                           struct EvnfObservations **out);

/**
 * Attaches one depth per observation (needed by the six-DoF model).
 *
 * # Safety
 * `handle` must be a live handle and `depths` must point to `count` values.
 */
enum EvnfStatus evnf_observations_set_depths(struct EvnfObservations *handle,
                                             const double *depths,
                                             size_t count);

/**
 * # Safety
 * `handle` must be a live handle and `len` writable.
 */
enum EvnfStatus evnf_observations_len(const struct EvnfObservations *handle, size_t *len);

/**
 * Copies the observations into `buf` (capacity `cap`).
 *
 * # Safety
 * `handle` must be live; `buf` must have room for `cap` values; `len` writable.
 */
enum EvnfStatus evnf_observations_copy(const struct EvnfObservations *handle,
                                       struct EvnfObservation *buf,
                                       size_t cap,
                                       size_t *len);

/**
 * # Safety
 * `handle` must be NULL or a handle not yet freed.
 */
void evnf_observations_free(struct EvnfObservations *handle);

/**
 * Creates an empty time surface of `width` x `height` pixels holding events
 * in `(t_ref - window, t_ref]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvnfStatus evnf_time_surface_new(uint32_t width,
                                      uint32_t height,
                                      double t_ref,
                                      double window,
                                      struct EvnfTimeSurface **out);

/**
 * Records the latest timestamp `t` and polarity (+1/-1) at pixel `(x, y)`.
 *
 * # Safety
 * `handle` must be a live handle.
 */
enum EvnfStatus evnf_time_surface_set(struct EvnfTimeSurface *handle,
                                      uint32_t x,
                                      uint32_t y,
                                      double t,
                                      int8_t polarity);

/**
 * # Safety
 * `handle` must be NULL or a handle not yet freed.
 */
void evnf_time_surface_free(struct EvnfTimeSurface *handle);

/**
 * Extracts normal flows from a time surface. `config` may be NULL for defaults.
 *
 * # Safety
 * Pointers must be valid; `out` receives a new handle.
 */
enum EvnfStatus evnf_extract(const struct EvnfTimeSurface *surface,
                             const struct EvnfIntrinsics *intrinsics,
                             const struct EvnfExtractionConfig *config,
                             struct EvnfObservations **out);

/**
 * Robust estimate of a model. `kind` is one of the `EvnfModelKind` values.
 * `velocity` (6 values, `nu` then `omega`) is required by the optical-flow
 * and depth models and ignored otherwise; `config` may be NULL for defaults.
 *
 * # Safety
 * Pointers must be valid; `velocity` must point to 6 values when required.
 */
enum EvnfStatus evnf_solve(const struct EvnfObservations *observations,
                           int32_t kind,
                           const double *velocity,
                           const struct EvnfRansacConfig *config,
                           struct EvnfFit **out);

/**
 * Copies the estimated parameters. Global models give their parameter
 * vector; per-observation models give values concatenated over the inliers.
 *
 * # Safety
 * `fit` must be live; `buf` must have room for `cap` values; `len` writable.
 */
enum EvnfStatus evnf_fit_theta(const struct EvnfFit *fit, double *buf, size_t cap, size_t *len);

/**
 * Copies the indices of the observations used by the estimate.
 *
 * # Safety
 * `fit` must be live; `buf` must have room for `cap` values; `len` writable.
 */
enum EvnfStatus evnf_fit_inliers(const struct EvnfFit *fit, size_t *buf, size_t cap, size_t *len);

/**
 * RMS normal-flow residual over the inliers.
 *
 * # Safety
 * `fit` must be live and `rms` writable.
 */
enum EvnfStatus evnf_fit_rms(const struct EvnfFit *fit, double *rms);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void evnf_fit_free(struct EvnfFit *fit);

/**
 * Removes the identity ambiguity from a linear differential-homography
 * estimate (row-major, 9 values) and decomposes the result.
 *
 * # Safety
 * `h_linear` must point to 9 values and `out` must be writable.
 */
enum EvnfStatus evnf_homography_analyse(const double *h_linear, struct EvnfHomographyResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVNF_H */
