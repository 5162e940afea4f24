#ifndef SMFVO_SMFVO_H
#define SMFVO_SMFVO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SMFVO_BUILDING)
#    define SMFVO_API __declspec(dllexport)
#  else
#    define SMFVO_API __declspec(dllimport)
#  endif
#else
#  define SMFVO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum smfvo_status {
  SMFVO_OK = 0,
  SMFVO_ERR_INVALID_ARGUMENT,
  SMFVO_ERR_POINT_BEHIND_CAMERA,
  SMFVO_ERR_NO_CONVERGENCE,
  SMFVO_ERR_DEGENERATE_SYSTEM,
  SMFVO_ERR_INSUFFICIENT_OBSERVATIONS,
  SMFVO_ERR_IMAGE_SIZE_MISMATCH,
  SMFVO_ERR_NON_MONOTONIC_TIMESTAMP,
  SMFVO_ERR_MISSING_CALIBRATION,
  SMFVO_ERR_EMPTY_SEQUENCE,
  SMFVO_ERR_UNPAIRABLE_STREAMS,
  SMFVO_ERR_PARSE,
  SMFVO_ERR_NO_OVERLAP,
  SMFVO_ERR_IO,
  SMFVO_ERR_INTERNAL
} smfvo_status;

SMFVO_API const char* smfvo_status_string(smfvo_status status);
/* Message of the last failed call on this thread; "" after a success. */
SMFVO_API const char* smfvo_last_error(void);
SMFVO_API const char* smfvo_version(void);

typedef struct smfvo_config smfvo_config;
typedef struct smfvo_rig smfvo_rig;
typedef struct smfvo_dataset smfvo_dataset;
typedef struct smfvo_pipeline smfvo_pipeline;
typedef struct smfvo_trajectory smfvo_trajectory;
typedef struct smfvo_stats_writer smfvo_stats_writer;

/* 8-bit image, 1 (gray), 3 (BGR) or 4 (BGRA) channels, rows `stride` bytes apart. */
typedef struct smfvo_image {
  const uint8_t* data;
  int width;
  int height;
  int channels;
  size_t stride;
} smfvo_image;

/* Per-frame output. twist = (wx, wy, wz, vx, vy, vz) in rad/frame and m/frame;
   pose = (tx, ty, tz, qx, qy, qz, qw), camera-to-world. */
typedef struct smfvo_frame_result {
  double timestamp;
  double twist[6];
  double pose[7];
  int inlier_count;
  int feature_count;
  int is_keyframe;
  int fallback;
  double track_us;
  double depth_us;
  double ransac_us;
  double opt_us;
  double total_us;
} smfvo_frame_result;

/* ---- configuration ---- */

SMFVO_API smfvo_status smfvo_config_create(smfvo_config** out);
SMFVO_API smfvo_status smfvo_config_load(const char* path, smfvo_config** out);
/* key as in the config file, e.g. "ransac.Q" or "pipeline.mode". */
SMFVO_API smfvo_status smfvo_config_set(smfvo_config* config, const char* key, const char* value);
/* Writes the full key = value listing; *needed receives the size including the
   terminating NUL. buf may be NULL when cap is 0. */
SMFVO_API smfvo_status smfvo_config_format(const smfvo_config* config, char* buf, size_t cap,
                                           size_t* needed);
SMFVO_API void smfvo_config_destroy(smfvo_config* config);

/* ---- calibration ---- */

SMFVO_API smfvo_status smfvo_rig_load(const char* path, smfvo_rig** out);
/* camera: "pinhole" or "fisheye"; the built-in synthetic rigs. */
SMFVO_API smfvo_status smfvo_rig_default(const char* camera, smfvo_rig** out);
SMFVO_API void smfvo_rig_destroy(smfvo_rig* rig);

/* ---- datasets ---- */

/* format: "euroc" or "synth". */
SMFVO_API smfvo_status smfvo_dataset_open(const char* path, const char* format, smfvo_dataset** out);
SMFVO_API size_t smfvo_dataset_size(const smfvo_dataset* dataset);
SMFVO_API double smfvo_dataset_timestamp(const smfvo_dataset* dataset, size_t index);
/* Returns a new rig handle with the dataset calibration. */
SMFVO_API smfvo_status smfvo_dataset_rig(const smfvo_dataset* dataset, smfvo_rig** out);
/* *out is NULL when the dataset has no ground truth. */
SMFVO_API smfvo_status smfvo_dataset_ground_truth(const smfvo_dataset* dataset, smfvo_trajectory** out);
SMFVO_API void smfvo_dataset_destroy(smfvo_dataset* dataset);

/* ---- pipeline ---- */

/* config may be NULL for defaults. */
SMFVO_API smfvo_status smfvo_pipeline_create(const smfvo_rig* rig, const smfvo_config* config,
                                             smfvo_pipeline** out);
SMFVO_API smfvo_status smfvo_pipeline_process(smfvo_pipeline* pipeline, const smfvo_image* left,
                                              const smfvo_image* right, double timestamp,
                                              smfvo_frame_result* out);
SMFVO_API smfvo_status smfvo_pipeline_process_dataset_frame(smfvo_pipeline* pipeline,
                                                            const smfvo_dataset* dataset, size_t index,
                                                            smfvo_frame_result* out);
SMFVO_API smfvo_status smfvo_pipeline_trajectory(const smfvo_pipeline* pipeline, smfvo_trajectory** out);
SMFVO_API void smfvo_pipeline_destroy(smfvo_pipeline* pipeline);

/* ---- trajectories and evaluation ---- */

SMFVO_API smfvo_status smfvo_trajectory_read(const char* path, smfvo_trajectory** out);
SMFVO_API smfvo_status smfvo_trajectory_write(const smfvo_trajectory* traj, const char* path);
SMFVO_API size_t smfvo_trajectory_size(const smfvo_trajectory* traj);
SMFVO_API smfvo_status smfvo_trajectory_get(const smfvo_trajectory* traj, size_t index, double* timestamp,
                                            double pose[7]);
SMFVO_API void smfvo_trajectory_destroy(smfvo_trajectory* traj);

/* align: "first" or "sim". */
SMFVO_API smfvo_status smfvo_ate_rmse(const smfvo_trajectory* est, const smfvo_trajectory* gt,
                                      const char* align, double* rmse_m);

/* ---- stats ---- */

SMFVO_API smfvo_status smfvo_stats_open(const char* path, smfvo_stats_writer** out);
SMFVO_API smfvo_status smfvo_stats_write(smfvo_stats_writer* writer, const smfvo_frame_result* result);
SMFVO_API void smfvo_stats_close(smfvo_stats_writer* writer);

/* ---- synthetic data ---- */

typedef struct smfvo_synth_options {
  uint64_t seed;
  int frames;
  double twist[6]; /* per frame, as in smfvo_frame_result */
  const char* camera; /* "pinhole" (default when NULL) or "fisheye" */
  double period_s;    /* frame spacing; 0 selects 0.05 */
} smfvo_synth_options;

SMFVO_API void smfvo_synth_options_init(smfvo_synth_options* options);
/* Renders a textured-room sequence to dir in the synth dataset layout. */
SMFVO_API smfvo_status smfvo_synth_write(const smfvo_synth_options* options, const char* dir);

/* ---- motion estimation on raw observations ---- */

/* Ray observations: r, rdot and P are n x 3 row-major arrays, d has n entries. */
SMFVO_API smfvo_status smfvo_solve_twist_ray(const double* r, const double* rdot, const double* d,
                                             size_t n, double twist_out[6]);
/* Pixel observations: p and u are n x 2 (relative to the principal point), Z has n entries. */
SMFVO_API smfvo_status smfvo_solve_twist_pixel(const double* p, const double* u, const double* Z, size_t n,
                                               double focal, double twist_out[6]);
/* inlier_mask (n bytes, may be NULL) receives 1 for inliers. config may be NULL. */
SMFVO_API smfvo_status smfvo_ransac_ray(const double* r, const double* rdot, const double* d,
                                        const double* P, size_t n, const smfvo_config* config,
                                        uint64_t seed, double twist_out[6], uint8_t* inlier_mask,
                                        size_t* inlier_count);

#ifdef __cplusplus
}
#endif

#endif
