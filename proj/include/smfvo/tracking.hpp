#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "smfvo/camera.hpp"

namespace smfvo {

struct TrackingParams {
  int cell_size = 32;
  int target_count = 200;
  double replenish_ratio = 0.9;  // detect again once tracks fall below this share of target_count
  double min_score = 1e-4;  // minimum eigenvalue of the structure tensor
  int score_block = 5;      // structure tensor window
  int window = 21;
  int pyramid_levels = 4;
  int max_iters = 30;
  double epsilon = 0.01;      // px update at which LK stops
  double fb_threshold = 0.5;  // forward-backward round trip, px
  double stereo_max_reprojection = 1.0;  // px, in both cameras
  double max_depth = 60.0;               // m

  int half_window() const { return window / 2; }
  void validate() const;
};

enum class TrackStatus { Tracked, Lost, OutOfBounds, FbFailed };

const char* to_string(TrackStatus status) noexcept;

struct Feature {
  std::uint64_t id = 0;
  Vec2 px = Vec2::Zero();
  int age = 0;
};

struct FeatureTrack {
  std::uint64_t id = 0;
  Vec2 px_prev = Vec2::Zero();
  Vec2 px_cur = Vec2::Zero();
  TrackStatus status = TrackStatus::Lost;
  int age = 0;
};

/// Grayscale pyramid; level 0 is the source image and each level halves the
/// previous resolution. Spatial derivatives are stored alongside each level so
/// repeated KLT calls on the same image do not recompute them.
class ImagePyramid {
 public:
  ImagePyramid(const cv::Mat& gray, const TrackingParams& params);

  int level_count() const { return static_cast<int>(levels_.size() / 2); }
  const cv::Mat& level(int i) const { return levels_.at(2 * static_cast<std::size_t>(i)); }
  /// Interleaved image / derivative levels in the layout calcOpticalFlowPyrLK takes.
  const std::vector<cv::Mat>& levels() const { return levels_; }
  const cv::Mat& image() const { return levels_.front(); }
  int width() const { return image().cols; }
  int height() const { return image().rows; }

 private:
  std::vector<cv::Mat> levels_;
};

/// Shi-Tomasi corners on a grid: at most one new corner per empty cell, ranked
/// by score, never closer than cell_size to an existing feature.
std::vector<Vec2> detect_features(const cv::Mat& gray, std::span<const Vec2> existing,
                                  const TrackingParams& params);

/// Pyramidal KLT with forward-backward verification. Output order matches
/// input order.
std::vector<FeatureTrack> track_klt(const ImagePyramid& prev, const ImagePyramid& cur,
                                    std::span<const Feature> features, const TrackingParams& params);

struct StereoMatch {
  bool valid = false;
  Vec2 px_right = Vec2::Zero();
  double d = 0.0;      // Euclidean depth ||P||
  Vec3 P = Vec3::Zero();  // left camera frame
};

/// Midpoint of the common perpendicular of the two viewing rays, in the left
/// frame. Rejects near-parallel rays and points behind either camera.
std::optional<Vec3> triangulate_midpoint(const StereoRig& rig, const Vec3& ray_left,
                                         const Vec3& ray_right);

/// Triangulates a left/right pixel pair and checks reprojection in both views.
std::optional<Vec3> triangulate_stereo(const StereoRig& rig, const Vec2& px_left,
                                       const Vec2& px_right, const TrackingParams& params);

/// Matches each left pixel into the right image with KLT started from the
/// infinite-depth prediction, then triangulates. Output order matches input.
std::vector<StereoMatch> stereo_depth(const StereoRig& rig, const ImagePyramid& left,
                                      const ImagePyramid& right, std::span<const Vec2> px_left,
                                      const TrackingParams& params);

}  // namespace smfvo
