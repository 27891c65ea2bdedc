/* C interface to the multi-view pose-supervised translation pipeline. */

#ifndef MVPT_H
#define MVPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Joints per pose (COCO-17).
 */
#define MVPT_NUM_JOINTS 17

/**
 * Bones in the kinematic tree.
 */
#define MVPT_NUM_BONES 16

/**
 * Status codes returned by every fallible function.
 */
typedef enum MvptStatus {
  MvptStatus_Ok = 0,
  /**
   * Null pointer or malformed argument.
   */
  MvptStatus_InvalidArgument = 1,
  /**
   * Degenerate geometry, insufficient views, undefined distances.
   */
  MvptStatus_Geometry = 2,
  /**
   * File system or serialization failure.
   */
  MvptStatus_Io = 3,
  /**
   * Configuration rejected.
   */
  MvptStatus_Config = 4,
  /**
   * Training/evaluation runtime failure.
   */
  MvptStatus_Runtime = 5,
} MvptStatus;

/**
 * Opaque calibrated camera.
 */
typedef struct MvptCamera MvptCamera;

/**
 * Opaque kinematic tree.
 */
typedef struct MvptSkeleton MvptSkeleton;

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mvpt_last_error(void);

/**
 * Static library version string.
 */
const char *mvpt_version(void);

/**
 * Creates a camera from a row-major 3x4 projection matrix.
 *
 * # Safety
 * `view_id` must be a NUL-terminated string and `projection` must point to
 * 12 readable doubles.
 */
struct MvptCamera *mvpt_camera_new(const char *view_id,
                                   const double *projection,
                                   uint32_t width,
                                   uint32_t height);

/**
 * # Safety
 * `camera` must come from [`mvpt_camera_new`] and not have been freed.
 */
void mvpt_camera_free(struct MvptCamera *camera);

/**
 * The fixed COCO-17 kinematic tree.
 */
struct MvptSkeleton *mvpt_skeleton_coco17(void);

/**
 * # Safety
 * `skeleton` must come from [`mvpt_skeleton_coco17`] and not have been
 * freed.
 */
void mvpt_skeleton_free(struct MvptSkeleton *skeleton);

/**
 * Projects a pose into a camera: `out_points` receives 17 (x, y) pixel
 * pairs, `out_conf` 17 confidences (1 for valid joints, 0 otherwise).
 *
 * # Safety
 * Pointers must reference buffers of the documented sizes.
 */
enum MvptStatus mvpt_project(const struct MvptCamera *camera,
                             const double *joints,
                             const uint8_t *valid,
                             double *out_points,
                             double *out_conf);

/**
 * Joint-wise confidence-weighted triangulation across `n_cameras` views.
 * `points` is `n_cameras * 17 * 2` doubles, `confidence`
 * `n_cameras * 17`; joints seen by fewer than two positive-confidence
 * views come back invalid.
 *
 * # Safety
 * Pointers must reference buffers of the documented sizes; every camera
 * handle must be live.
 */
enum MvptStatus mvpt_triangulate_pose(const struct MvptCamera *const *cameras,
                                      uintptr_t n_cameras,
                                      const double *points,
                                      const double *confidence,
                                      double *out_joints,
                                      uint8_t *out_valid);

/**
 * Outlier-robust pose distance (mean squared per-coordinate error below
 * `epsilon`, compressed above it).
 *
 * # Safety
 * Pose buffers must hold 17*3 doubles (+ optional 17-byte masks).
 */
enum MvptStatus mvpt_smooth_mse(const double *a_joints,
                                const uint8_t *a_valid,
                                const double *b_joints,
                                const uint8_t *b_valid,
                                double epsilon,
                                double *out);

/**
 * Mean bone lengths over `n_poses` poses (each 17*3 doubles plus optional
 * mask); `out_lengths` receives 16 doubles in bone order.
 *
 * # Safety
 * Buffers must match the documented sizes.
 */
enum MvptStatus mvpt_limb_profile(const struct MvptSkeleton *skeleton,
                                  const double *joints,
                                  const uint8_t *valid,
                                  uintptr_t n_poses,
                                  double *out_lengths);

/**
 * Retargets a pose to the given bone lengths (16 doubles), keeping bone
 * directions and the root position.
 *
 * # Safety
 * Buffers must match the documented sizes.
 */
enum MvptStatus mvpt_scale_pose(const struct MvptSkeleton *skeleton,
                                const double *joints,
                                const uint8_t *valid,
                                const double *bone_lengths,
                                double *out_joints,
                                uint8_t *out_valid);

/**
 * Mean per-joint Euclidean distance over jointly valid joints.
 *
 * # Safety
 * Pose buffers must hold 17*3 doubles (+ optional 17-byte masks).
 */
enum MvptStatus mvpt_mpjpe(const double *a_joints,
                           const uint8_t *a_valid,
                           const double *b_joints,
                           const uint8_t *b_valid,
                           double *out);

/**
 * Generates the synthetic dataset described by the config. `seed < 0`
 * keeps the config's seed.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum MvptStatus mvpt_synth(const char *config_path, int64_t seed, const char *out_dir);

/**
 * Ingests the CMU-Panoptic sequence named in the config.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum MvptStatus mvpt_ingest(const char *config_path, const char *out_dir);

/**
 * Trains a run into `out_dir`. `resume` and `detector` may be NULL.
 *
 * # Safety
 * Paths must be NUL-terminated strings (or NULL where documented).
 */
enum MvptStatus mvpt_train(const char *config_path,
                           const char *out_dir,
                           bool baseline,
                           const char *resume,
                           const char *detector);

/**
 * Evaluates a checkpoint and writes the JSON report.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum MvptStatus mvpt_eval(const char *config_path,
                          const char *checkpoint,
                          const char *report_path,
                          bool baseline);

#endif  /* MVPT_H */
