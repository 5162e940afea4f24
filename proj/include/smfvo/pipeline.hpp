#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include <opencv2/core.hpp>

#include "smfvo/backend.hpp"
#include "smfvo/camera.hpp"
#include "smfvo/ransac.hpp"
#include "smfvo/tracking.hpp"

namespace smfvo {

enum class EstimationMode { Ray, Pixel };

const char* to_string(EstimationMode mode) noexcept;
EstimationMode estimation_mode_from_string(const std::string& name);

struct PipelineConfig {
  EstimationMode mode = EstimationMode::Ray;
  bool optimize = true;
  std::uint64_t seed = 1;
  int max_keyframes = 5;  // sliding window of keyframes kept for the optimizer
  bool stereo_residuals = true;  // keyframes also carry right-camera rays
  RansacParams ransac;
  TrackingParams tracking;
  KeyframePolicy keyframe;
  OptimizerParams opt;

  void validate() const;
};

struct StageTimings {
  double track_us = 0.0;
  double depth_us = 0.0;
  double ransac_us = 0.0;
  double opt_us = 0.0;
  double total_us = 0.0;
};

struct FrameResult {
  double timestamp = 0.0;
  Twist twist;
  Pose pose;
  int inlier_count = 0;
  int feature_count = 0;  // features tracked into this frame
  StageTimings timings;
  bool is_keyframe = false;
  bool fallback = false;  // constant-velocity prediction was used
};

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<StampedPose>;

/// R <- R Exp(omega), t <- t + R v.
Pose integrate_twist(const Pose& prev, const Twist& s);

class Pipeline {
 public:
  Pipeline(const StereoRig& rig, const PipelineConfig& config);

  /// Accepts 8-bit grayscale or BGR images of the calibrated size.
  /// Throws ImageSizeMismatch and NonMonotonicTimestamp.
  FrameResult process_frame(const cv::Mat& left, const cv::Mat& right, double timestamp);

  const Trajectory& trajectory() const { return trajectory_; }
  const Pose& pose() const { return pose_; }
  const PipelineConfig& config() const { return config_; }
  std::size_t frame_count() const { return trajectory_.size(); }
  std::size_t landmark_count() const { return landmarks_.size(); }

 private:
  struct TrackedFeature {
    Feature feature;
    Vec3 ray = Vec3::UnitZ();       // unit ray in the current left camera
    std::optional<Vec3> P;          // stereo point in the current left camera
    std::optional<Vec3> right_ray;  // matched unit ray in the right camera
  };

  cv::Mat to_gray(const cv::Mat& img, const CameraIntrinsics& K) const;
  void replenish(const cv::Mat& gray);
  void triangulate(const ImagePyramid& left, const ImagePyramid& right);
  bool maybe_keyframe(int inlier_count, std::span<const std::uint64_t> inlier_ids, FrameResult& out);
  void drop_oldest_keyframe();

  StereoRig rig_;
  PipelineConfig config_;

  std::optional<ImagePyramid> prev_left_;
  std::vector<TrackedFeature> features_;
  std::uint64_t next_feature_id_ = 0;

  Pose pose_;
  Twist last_twist_;
  std::optional<double> last_timestamp_;
  Trajectory trajectory_;

  std::deque<Keyframe> keyframes_;
  std::unordered_map<std::uint64_t, Landmark> landmarks_;
  std::size_t frame_index_ = 0;
  std::size_t last_keyframe_frame_ = 0;
};

}  // namespace smfvo
