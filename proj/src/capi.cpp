#include "smfvo/smfvo.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "smfvo/io.hpp"
#include "smfvo/pipeline.hpp"
#include "smfvo/ransac.hpp"
#include "smfvo/synth.hpp"

struct smfvo_config {
  smfvo::PipelineConfig value;
};
struct smfvo_rig {
  smfvo::StereoRig value;
};
struct smfvo_dataset {
  smfvo::DatasetReader value;
};
struct smfvo_pipeline {
  smfvo::Pipeline value;
};
struct smfvo_trajectory {
  smfvo::Trajectory value;
};
struct smfvo_stats_writer {
  smfvo::StatsWriter value;
};

namespace {

thread_local std::string g_last_error;

smfvo_status to_status(smfvo::ErrorCode code) {
  using smfvo::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return SMFVO_ERR_INVALID_ARGUMENT;
    case ErrorCode::PointBehindCamera: return SMFVO_ERR_POINT_BEHIND_CAMERA;
    case ErrorCode::NoConvergence: return SMFVO_ERR_NO_CONVERGENCE;
    case ErrorCode::DegenerateSystem: return SMFVO_ERR_DEGENERATE_SYSTEM;
    case ErrorCode::InsufficientObservations: return SMFVO_ERR_INSUFFICIENT_OBSERVATIONS;
    case ErrorCode::ImageSizeMismatch: return SMFVO_ERR_IMAGE_SIZE_MISMATCH;
    case ErrorCode::NonMonotonicTimestamp: return SMFVO_ERR_NON_MONOTONIC_TIMESTAMP;
    case ErrorCode::MissingCalibration: return SMFVO_ERR_MISSING_CALIBRATION;
    case ErrorCode::EmptySequence: return SMFVO_ERR_EMPTY_SEQUENCE;
    case ErrorCode::UnpairableStreams: return SMFVO_ERR_UNPAIRABLE_STREAMS;
    case ErrorCode::ParseError: return SMFVO_ERR_PARSE;
    case ErrorCode::NoOverlap: return SMFVO_ERR_NO_OVERLAP;
    case ErrorCode::Io: return SMFVO_ERR_IO;
  }
  return SMFVO_ERR_INTERNAL;
}

smfvo_status fail(smfvo_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes and the thread-local message.
template <typename Fn>
smfvo_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SMFVO_OK;
  } catch (const smfvo::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SMFVO_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SMFVO_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SMFVO_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw smfvo::Error(smfvo::ErrorCode::InvalidArgument, what);
}

cv::Mat wrap(const smfvo_image* img) {
  require(img && img->data, "image is null");
  require(img->width > 0 && img->height > 0, "image size must be positive");
  require(img->channels == 1 || img->channels == 3 || img->channels == 4, "image must have 1, 3 or 4 channels");
  const std::size_t row = static_cast<std::size_t>(img->width) * static_cast<std::size_t>(img->channels);
  const std::size_t stride = img->stride == 0 ? row : img->stride;
  require(stride >= row, "image stride is smaller than a row");
  return cv::Mat(img->height, img->width, CV_8UC(img->channels), const_cast<std::uint8_t*>(img->data), stride);
}

void fill(const smfvo::FrameResult& r, smfvo_frame_result* out) {
  out->timestamp = r.timestamp;
  const smfvo::Vec6 s = r.twist.vector();
  for (int i = 0; i < 6; ++i) out->twist[i] = s[i];
  Eigen::Quaterniond q = r.pose.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double pose[7] = {r.pose.t.x(), r.pose.t.y(), r.pose.t.z(), q.x(), q.y(), q.z(), q.w()};
  std::memcpy(out->pose, pose, sizeof pose);
  out->inlier_count = r.inlier_count;
  out->feature_count = r.feature_count;
  out->is_keyframe = r.is_keyframe ? 1 : 0;
  out->fallback = r.fallback ? 1 : 0;
  out->track_us = r.timings.track_us;
  out->depth_us = r.timings.depth_us;
  out->ransac_us = r.timings.ransac_us;
  out->opt_us = r.timings.opt_us;
  out->total_us = r.timings.total_us;
}

smfvo::FrameResult unfill(const smfvo_frame_result& in) {
  smfvo::FrameResult r;
  r.timestamp = in.timestamp;
  r.twist = smfvo::Twist::from_vector(Eigen::Map<const smfvo::Vec6>(in.twist));
  r.pose = smfvo::Pose::from_quaternion(Eigen::Quaterniond(in.pose[6], in.pose[3], in.pose[4], in.pose[5]),
                                        smfvo::Vec3(in.pose[0], in.pose[1], in.pose[2]));
  r.inlier_count = in.inlier_count;
  r.feature_count = in.feature_count;
  r.is_keyframe = in.is_keyframe != 0;
  r.fallback = in.fallback != 0;
  r.timings = {in.track_us, in.depth_us, in.ransac_us, in.opt_us, in.total_us};
  return r;
}

void write_twist(const smfvo::Twist& s, double out[6]) {
  const smfvo::Vec6 v = s.vector();
  for (int i = 0; i < 6; ++i) out[i] = v[i];
}

std::vector<smfvo::RayObservation> ray_observations(const double* r, const double* rdot, const double* d,
                                                    const double* P, std::size_t n) {
  require(n == 0 || (r && rdot && d), "observation arrays are null");
  std::vector<smfvo::RayObservation> obs(n);
  for (std::size_t i = 0; i < n; ++i) {
    obs[i].r = smfvo::Vec3(r[3 * i], r[3 * i + 1], r[3 * i + 2]);
    obs[i].rdot = smfvo::Vec3(rdot[3 * i], rdot[3 * i + 1], rdot[3 * i + 2]);
    obs[i].d = d[i];
    obs[i].P = P ? smfvo::Vec3(P[3 * i], P[3 * i + 1], P[3 * i + 2]) : smfvo::Vec3(d[i] * obs[i].r);
  }
  return obs;
}

}  // namespace

extern "C" {

const char* smfvo_status_string(smfvo_status status) {
  switch (status) {
    case SMFVO_OK: return "ok";
    case SMFVO_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case SMFVO_ERR_POINT_BEHIND_CAMERA: return "PointBehindCamera";
    case SMFVO_ERR_NO_CONVERGENCE: return "NoConvergence";
    case SMFVO_ERR_DEGENERATE_SYSTEM: return "DegenerateSystem";
    case SMFVO_ERR_INSUFFICIENT_OBSERVATIONS: return "InsufficientObservations";
    case SMFVO_ERR_IMAGE_SIZE_MISMATCH: return "ImageSizeMismatch";
    case SMFVO_ERR_NON_MONOTONIC_TIMESTAMP: return "NonMonotonicTimestamp";
    case SMFVO_ERR_MISSING_CALIBRATION: return "MissingCalibration";
    case SMFVO_ERR_EMPTY_SEQUENCE: return "EmptySequence";
    case SMFVO_ERR_UNPAIRABLE_STREAMS: return "UnpairableStreams";
    case SMFVO_ERR_PARSE: return "ParseError";
    case SMFVO_ERR_NO_OVERLAP: return "NoOverlap";
    case SMFVO_ERR_IO: return "Io";
    case SMFVO_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* smfvo_last_error(void) { return g_last_error.c_str(); }

const char* smfvo_version(void) { return "0.1.0"; }

smfvo_status smfvo_config_create(smfvo_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new smfvo_config{};
  });
}

smfvo_status smfvo_config_load(const char* path, smfvo_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new smfvo_config{smfvo::load_config(path)};
  });
}

smfvo_status smfvo_config_set(smfvo_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    smfvo::PipelineConfig next = config->value;
    smfvo::apply_config_value(next, key, value);
    next.validate();
    config->value = next;
  });
}

smfvo_status smfvo_config_format(const smfvo_config* config, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(config, "config is null");
    require(buf || cap == 0, "buffer is null");
    const std::string text = smfvo::format_config(config->value);
    if (needed) *needed = text.size() + 1;
    if (cap == 0) return;
    const std::size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
    require(cap > text.size(), "buffer too small");
  });
}

void smfvo_config_destroy(smfvo_config* config) { delete config; }

smfvo_status smfvo_rig_load(const char* path, smfvo_rig** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new smfvo_rig{smfvo::load_calibration(path)};
  });
}

smfvo_status smfvo_rig_default(const char* camera, smfvo_rig** out) {
  return guarded([&] {
    require(out, "out is null");
    const std::string name = camera ? camera : "pinhole";
    if (name == "pinhole")
      *out = new smfvo_rig{smfvo::default_pinhole_rig()};
    else if (name == "fisheye")
      *out = new smfvo_rig{smfvo::default_fisheye_rig()};
    else
      throw smfvo::Error(smfvo::ErrorCode::InvalidArgument, "unknown camera '" + name + "' (expected pinhole|fisheye)");
  });
}

void smfvo_rig_destroy(smfvo_rig* rig) { delete rig; }

smfvo_status smfvo_dataset_open(const char* path, const char* format, smfvo_dataset** out) {
  return guarded([&] {
    require(path && out, "null argument");
    const auto fmt = smfvo::dataset_format_from_string(format ? format : "euroc");
    *out = new smfvo_dataset{smfvo::load_dataset(path, fmt)};
  });
}

size_t smfvo_dataset_size(const smfvo_dataset* dataset) { return dataset ? dataset->value.size() : 0; }

double smfvo_dataset_timestamp(const smfvo_dataset* dataset, size_t index) {
  if (!dataset || index >= dataset->value.size()) return 0.0;
  return dataset->value.frame(index).timestamp;
}

smfvo_status smfvo_dataset_rig(const smfvo_dataset* dataset, smfvo_rig** out) {
  return guarded([&] {
    require(dataset && out, "null argument");
    *out = new smfvo_rig{dataset->value.rig()};
  });
}

smfvo_status smfvo_dataset_ground_truth(const smfvo_dataset* dataset, smfvo_trajectory** out) {
  return guarded([&] {
    require(dataset && out, "null argument");
    const auto& gt = dataset->value.ground_truth();
    *out = gt ? new smfvo_trajectory{*gt} : nullptr;
  });
}

void smfvo_dataset_destroy(smfvo_dataset* dataset) { delete dataset; }

smfvo_status smfvo_pipeline_create(const smfvo_rig* rig, const smfvo_config* config, smfvo_pipeline** out) {
  return guarded([&] {
    require(rig && out, "null argument");
    *out = new smfvo_pipeline{smfvo::Pipeline(rig->value, config ? config->value : smfvo::PipelineConfig{})};
  });
}

smfvo_status smfvo_pipeline_process(smfvo_pipeline* pipeline, const smfvo_image* left, const smfvo_image* right,
                                    double timestamp, smfvo_frame_result* out) {
  return guarded([&] {
    require(pipeline, "pipeline is null");
    const auto r = pipeline->value.process_frame(wrap(left), wrap(right), timestamp);
    if (out) fill(r, out);
  });
}

smfvo_status smfvo_pipeline_process_dataset_frame(smfvo_pipeline* pipeline, const smfvo_dataset* dataset,
                                                  size_t index, smfvo_frame_result* out) {
  return guarded([&] {
    require(pipeline && dataset, "null argument");
    require(index < dataset->value.size(), "frame index out of range");
    const auto [left, right] = dataset->value.load(index);
    const auto r = pipeline->value.process_frame(left, right, dataset->value.frame(index).timestamp);
    if (out) fill(r, out);
  });
}

smfvo_status smfvo_pipeline_trajectory(const smfvo_pipeline* pipeline, smfvo_trajectory** out) {
  return guarded([&] {
    require(pipeline && out, "null argument");
    *out = new smfvo_trajectory{pipeline->value.trajectory()};
  });
}

void smfvo_pipeline_destroy(smfvo_pipeline* pipeline) { delete pipeline; }

smfvo_status smfvo_trajectory_read(const char* path, smfvo_trajectory** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new smfvo_trajectory{smfvo::read_trajectory(path)};
  });
}

smfvo_status smfvo_trajectory_write(const smfvo_trajectory* traj, const char* path) {
  return guarded([&] {
    require(traj && path, "null argument");
    smfvo::write_trajectory(traj->value, path);
  });
}

size_t smfvo_trajectory_size(const smfvo_trajectory* traj) { return traj ? traj->value.size() : 0; }

smfvo_status smfvo_trajectory_get(const smfvo_trajectory* traj, size_t index, double* timestamp, double pose[7]) {
  return guarded([&] {
    require(traj, "trajectory is null");
    require(index < traj->value.size(), "pose index out of range");
    const auto& sp = traj->value[index];
    if (timestamp) *timestamp = sp.timestamp;
    if (pose) {
      Eigen::Quaterniond q = sp.pose.quaternion();
      if (q.w() < 0.0) q.coeffs() = -q.coeffs();
      const double p[7] = {sp.pose.t.x(), sp.pose.t.y(), sp.pose.t.z(), q.x(), q.y(), q.z(), q.w()};
      std::memcpy(pose, p, sizeof p);
    }
  });
}

void smfvo_trajectory_destroy(smfvo_trajectory* traj) { delete traj; }

smfvo_status smfvo_ate_rmse(const smfvo_trajectory* est, const smfvo_trajectory* gt, const char* align,
                            double* rmse_m) {
  return guarded([&] {
    require(est && gt && rmse_m, "null argument");
    *rmse_m = smfvo::ate_rmse(est->value, gt->value, smfvo::alignment_from_string(align ? align : "first"));
  });
}

smfvo_status smfvo_stats_open(const char* path, smfvo_stats_writer** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new smfvo_stats_writer{smfvo::StatsWriter(path)};
  });
}

smfvo_status smfvo_stats_write(smfvo_stats_writer* writer, const smfvo_frame_result* result) {
  return guarded([&] {
    require(writer && result, "null argument");
    writer->value.write(unfill(*result));
  });
}

void smfvo_stats_close(smfvo_stats_writer* writer) { delete writer; }

void smfvo_synth_options_init(smfvo_synth_options* options) {
  if (!options) return;
  *options = {};
  options->seed = 1;
  options->frames = 500;
  options->twist[1] = 0.0126;
  options->twist[5] = 0.02;
  options->camera = "pinhole";
  options->period_s = 0.05;
}

smfvo_status smfvo_synth_write(const smfvo_synth_options* options, const char* dir) {
  return guarded([&] {
    require(options && dir, "null argument");
    require(options->frames > 0, "frames must be positive");
    smfvo_rig* rig = nullptr;
    if (smfvo_rig_default(options->camera, &rig) != SMFVO_OK)
      throw smfvo::Error(smfvo::ErrorCode::InvalidArgument, smfvo_last_error());
    const std::unique_ptr<smfvo_rig, void (*)(smfvo_rig*)> holder(rig, smfvo_rig_destroy);
    const auto s = smfvo::Twist::from_vector(Eigen::Map<const smfvo::Vec6>(options->twist));
    const auto scene = smfvo::make_room_scene(options->seed, s, options->frames, rig->value);
    smfvo::write_synth_dataset(scene, dir, options->period_s > 0.0 ? options->period_s : 0.05);
  });
}

smfvo_status smfvo_solve_twist_ray(const double* r, const double* rdot, const double* d, size_t n,
                                   double twist_out[6]) {
  return guarded([&] {
    require(twist_out, "twist_out is null");
    const auto obs = ray_observations(r, rdot, d, nullptr, n);
    write_twist(smfvo::solve_twist_ray(obs).twist, twist_out);
  });
}

smfvo_status smfvo_solve_twist_pixel(const double* p, const double* u, const double* Z, size_t n, double focal,
                                     double twist_out[6]) {
  return guarded([&] {
    require(twist_out, "twist_out is null");
    require(n == 0 || (p && u && Z), "observation arrays are null");
    std::vector<smfvo::PixelObservation> obs(n);
    for (std::size_t i = 0; i < n; ++i)
      obs[i] = {smfvo::Vec2(p[2 * i], p[2 * i + 1]), smfvo::Vec2(u[2 * i], u[2 * i + 1]), Z[i]};
    write_twist(smfvo::solve_twist_pixel(obs, focal).twist, twist_out);
  });
}

smfvo_status smfvo_ransac_ray(const double* r, const double* rdot, const double* d, const double* P, size_t n,
                              const smfvo_config* config, uint64_t seed, double twist_out[6],
                              uint8_t* inlier_mask, size_t* inlier_count) {
  return guarded([&] {
    require(twist_out, "twist_out is null");
    const auto obs = ray_observations(r, rdot, d, P, n);
    const smfvo::RansacParams params = config ? config->value.ransac : smfvo::RansacParams{};
    const auto result = smfvo::ransac(obs, params, seed);
    write_twist(result.twist, twist_out);
    if (inlier_mask) {
      std::memset(inlier_mask, 0, n);
      for (std::size_t i : result.inliers) inlier_mask[i] = 1;
    }
    if (inlier_count) *inlier_count = result.inliers.size();
  });
}

}  // extern "C"
