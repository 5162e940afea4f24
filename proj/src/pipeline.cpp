#include "smfvo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

#include <opencv2/imgproc.hpp>

namespace smfvo {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point since) {
  return std::chrono::duration<double, std::micro>(Clock::now() - since).count();
}

constexpr double kMinPixelModeZ = 0.1;  // r_z floor for the virtual pinhole

}  // namespace

const char* to_string(EstimationMode mode) noexcept {
  return mode == EstimationMode::Ray ? "ray" : "pixel";
}

EstimationMode estimation_mode_from_string(const std::string& name) {
  if (name == "ray") return EstimationMode::Ray;
  if (name == "pixel") return EstimationMode::Pixel;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + name + "' (expected ray|pixel)");
}

void PipelineConfig::validate() const {
  ransac.validate();
  tracking.validate();
  keyframe.validate();
  opt.validate();
  if (max_keyframes < 2) throw Error(ErrorCode::InvalidArgument, "pipeline.max_keyframes must be >= 2");
}

Pose integrate_twist(const Pose& prev, const Twist& s) {
  return {prev.R * so3_exp(s.omega), prev.t + prev.R * s.v};
}

Pipeline::Pipeline(const StereoRig& rig, const PipelineConfig& config) : rig_(rig), config_(config) {
  rig_.validate();
  config_.validate();
}

cv::Mat Pipeline::to_gray(const cv::Mat& img, const CameraIntrinsics& K) const {
  if (img.empty()) throw Error(ErrorCode::ImageSizeMismatch, "empty image");
  if (K.width > 0 && K.height > 0 && (img.cols != K.width || img.rows != K.height))
    throw Error(ErrorCode::ImageSizeMismatch,
                "image is " + std::to_string(img.cols) + "x" + std::to_string(img.rows) +
                    ", calibration expects " + std::to_string(K.width) + "x" + std::to_string(K.height));
  if (img.type() == CV_8UC1) return img;
  cv::Mat gray;
  if (img.type() == CV_8UC3) {
    cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
  } else if (img.type() == CV_8UC4) {
    cv::cvtColor(img, gray, cv::COLOR_BGRA2GRAY);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unsupported image type");
  }
  return gray;
}

void Pipeline::replenish(const cv::Mat& gray) {
  const double floor = config_.tracking.replenish_ratio * config_.tracking.target_count;
  if (!features_.empty() && static_cast<double>(features_.size()) >= floor) return;
  std::vector<Vec2> existing;
  existing.reserve(features_.size());
  for (const auto& f : features_) existing.push_back(f.feature.px);
  for (const Vec2& px : detect_features(gray, existing, config_.tracking)) {
    const auto ray = try_unproject(rig_.left, px);
    if (!ray) continue;
    TrackedFeature tf;
    tf.feature = {next_feature_id_++, px, 0};
    tf.ray = *ray;
    features_.push_back(tf);
  }
}

void Pipeline::triangulate(const ImagePyramid& left, const ImagePyramid& right) {
  std::vector<Vec2> px;
  px.reserve(features_.size());
  for (const auto& f : features_) px.push_back(f.feature.px);
  const auto matches = stereo_depth(rig_, left, right, px, config_.tracking);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    // Keep the point on the left viewing ray so P = d r holds exactly.
    features_[i].P.reset();
    features_[i].right_ray.reset();
    if (!matches[i].valid) continue;
    features_[i].P = matches[i].d * features_[i].ray;
    features_[i].right_ray = try_unproject(rig_.right, matches[i].px_right);
  }
}

void Pipeline::drop_oldest_keyframe() {
  const Keyframe& old = keyframes_.front();
  for (const auto& [lm_id, ray] : old.observations) {
    auto it = landmarks_.find(lm_id);
    if (it == landmarks_.end()) continue;
    auto& obs = it->second.observers;
    obs.erase(std::remove(obs.begin(), obs.end(), old.id), obs.end());
    if (obs.empty()) landmarks_.erase(it);
  }
  keyframes_.pop_front();
}

bool Pipeline::maybe_keyframe(int inlier_count, std::span<const std::uint64_t> inlier_ids,
                              FrameResult& out) {
  const bool first = keyframes_.empty();
  if (!first) {
    const Pose rel = keyframes_.back().pose.inverse() * pose_;
    const int elapsed = static_cast<int>(frame_index_ - last_keyframe_frame_);
    if (!should_create_keyframe(inlier_count, elapsed, rel, config_.keyframe)) return false;
  }

  const std::unordered_set<std::uint64_t> inliers(inlier_ids.begin(), inlier_ids.end());
  Keyframe kf;
  kf.id = frame_index_;
  kf.pose = pose_;
  kf.R_rl = rig_.R_rl;
  kf.t_rl = rig_.t_rl;
  const auto observe = [&](const TrackedFeature& f) {
    kf.observations.emplace(f.feature.id, f.ray);
    if (config_.stereo_residuals && f.right_ray) kf.right_observations.emplace(f.feature.id, *f.right_ray);
  };
  std::vector<Landmark> tracked;
  for (const auto& f : features_) {
    auto it = landmarks_.find(f.feature.id);
    if (it == landmarks_.end() || !it->second.inlier || !inliers.count(f.feature.id)) continue;
    observe(f);
    tracked.push_back(it->second);
  }

  if (config_.optimize && !first) {
    const auto t0 = Clock::now();
    const std::vector<Keyframe> fixed(keyframes_.begin(), keyframes_.end());
    try {
      const auto result = optimize_keyframe(kf, fixed, tracked, config_.opt);
      pose_ = result.pose;
      kf.pose = pose_;
      for (const Landmark& lm : result.landmarks) {
        Landmark& stored = landmarks_.at(lm.id);
        stored.P = lm.P;
        if (!lm.inlier) {
          stored.inlier = false;
          kf.observations.erase(lm.id);
          kf.right_observations.erase(lm.id);
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientObservations) throw;
    }
    out.timings.opt_us = elapsed_us(t0);
  }

  // New landmarks are anchored at the refined pose.
  for (const auto& [id, ray] : kf.observations) landmarks_.at(id).observers.push_back(kf.id);
  for (const auto& f : features_) {
    if (!f.P || landmarks_.count(f.feature.id)) continue;
    Landmark lm;
    lm.id = f.feature.id;
    lm.P = pose_.transform(*f.P);
    lm.observers.push_back(kf.id);
    landmarks_.emplace(lm.id, std::move(lm));
    observe(f);
  }

  keyframes_.push_back(std::move(kf));
  while (static_cast<int>(keyframes_.size()) > config_.max_keyframes) drop_oldest_keyframe();
  last_keyframe_frame_ = frame_index_;
  return true;
}

FrameResult Pipeline::process_frame(const cv::Mat& left_img, const cv::Mat& right_img,
                                    double timestamp) {
  if (last_timestamp_ && !(timestamp > *last_timestamp_))
    throw Error(ErrorCode::NonMonotonicTimestamp, "timestamps must be strictly increasing");
  const cv::Mat left = to_gray(left_img, rig_.left);
  const cv::Mat right = to_gray(right_img, rig_.right);
  if (left.size() != right.size())
    throw Error(ErrorCode::ImageSizeMismatch, "left and right images differ in size");

  const auto t_start = Clock::now();
  FrameResult out;
  out.timestamp = timestamp;

  auto t0 = Clock::now();
  ImagePyramid left_pyr(left, config_.tracking);
  std::vector<std::uint64_t> inlier_ids;

  if (prev_left_) {
    std::vector<Feature> feats;
    feats.reserve(features_.size());
    for (const auto& f : features_) feats.push_back(f.feature);
    const auto tracks = track_klt(*prev_left_, left_pyr, feats, config_.tracking);
    out.timings.track_us = elapsed_us(t0);

    t0 = Clock::now();
    const bool pixel = config_.mode == EstimationMode::Pixel;
    const double f = rig_.left.fx;
    std::vector<TrackedFeature> survivors;
    std::vector<std::size_t> obs_index;  // survivor index per observation
    std::vector<RayObservation> ray_obs;
    std::vector<PixelObservation> pix_obs;
    survivors.reserve(tracks.size());
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      if (tracks[i].status != TrackStatus::Tracked) continue;
      const auto r_cur = try_unproject(rig_.left, tracks[i].px_cur);
      if (!r_cur) continue;
      const TrackedFeature& prev = features_[i];
      if (prev.P) {
        const Vec3& r0 = prev.ray;
        if (!pixel) {
          ray_obs.push_back({r0, *r_cur - r0, prev.P->norm(), *prev.P});
          obs_index.push_back(survivors.size());
        } else if (r0.z() >= kMinPixelModeZ && r_cur->z() >= kMinPixelModeZ) {
          const Vec2 p0 = f * r0.head<2>() / r0.z();
          const Vec2 p1 = f * r_cur->head<2>() / r_cur->z();
          pix_obs.push_back({p0, p1 - p0, prev.P->z()});
          obs_index.push_back(survivors.size());
        }
      }
      TrackedFeature next;
      next.feature = {tracks[i].id, tracks[i].px_cur, tracks[i].age};
      next.ray = *r_cur;
      survivors.push_back(next);
    }
    out.feature_count = static_cast<int>(survivors.size());

    const std::uint64_t seed = config_.seed + frame_index_;
    const RansacResult rr = pixel ? ransac_pixel(pix_obs, f, config_.ransac, seed)
                                  : ransac(ray_obs, config_.ransac, seed);
    out.timings.ransac_us = elapsed_us(t0);

    if (rr.inliers.empty()) {
      out.fallback = true;
      out.twist = last_twist_;
    } else {
      out.twist = rr.twist;
      out.inlier_count = static_cast<int>(rr.inliers.size());
      // Drop RANSAC outliers from the track set; features without depth stay.
      std::vector<char> keep(survivors.size(), 1);
      for (std::size_t k = 0; k < obs_index.size(); ++k) keep[obs_index[k]] = 0;
      for (std::size_t k : rr.inliers) {
        keep[obs_index[k]] = 1;
        inlier_ids.push_back(survivors[obs_index[k]].feature.id);
      }
      std::vector<TrackedFeature> kept;
      kept.reserve(survivors.size());
      for (std::size_t k = 0; k < survivors.size(); ++k)
        if (keep[k]) kept.push_back(std::move(survivors[k]));
      survivors = std::move(kept);
    }
    features_ = std::move(survivors);
    last_twist_ = out.twist;
    pose_ = integrate_twist(pose_, out.twist);
    t0 = Clock::now();
  }

  replenish(left);
  out.timings.track_us += elapsed_us(t0);
  if (!prev_left_) out.feature_count = static_cast<int>(features_.size());

  t0 = Clock::now();
  ImagePyramid right_pyr(right, config_.tracking);
  triangulate(left_pyr, right_pyr);
  out.timings.depth_us = elapsed_us(t0);

  out.is_keyframe = maybe_keyframe(prev_left_ ? out.inlier_count : config_.keyframe.tau_n,
                                   inlier_ids, out);

  prev_left_.emplace(std::move(left_pyr));
  out.pose = pose_;
  trajectory_.push_back({timestamp, pose_});
  last_timestamp_ = timestamp;
  ++frame_index_;
  out.timings.total_us = elapsed_us(t_start);
  return out;
}

}  // namespace smfvo
