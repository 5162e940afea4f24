#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "smfvo/lie.hpp"

namespace smfvo {

struct KeyframePolicy {
  int tau_n = 60;           // minimum tracked inlier count
  int max_elapsed = 30;     // frames since the last keyframe
  double rot_thresh = deg2rad(10.0);
  double trans_thresh = 0.5;  // m
  void validate() const;
};

/// True iff inliers < tau_n, elapsed > max_elapsed, or the relative motion
/// to the last keyframe exceeds either threshold.
bool should_create_keyframe(int inlier_count, int frames_elapsed, const Pose& rel_pose,
                            const KeyframePolicy& policy);

struct CauchyValue {
  double value;
  double weight;  // d rho / d s
};

/// rho(s) = c^2 log(1 + s / c^2) on a squared residual s.
CauchyValue cauchy_loss(double s, double c);

struct OptimizerParams {
  double cauchy_c = 0.01;
  int max_iters = 10;
  double step_tolerance = 1e-10;
  double damping_init = 1e-4;
  double damping_scale = 10.0;
  int min_observations = 10;
  void validate() const;
};

struct Keyframe {
  std::uint64_t id = 0;
  Pose pose;  // camera-to-world
  std::unordered_map<std::uint64_t, Vec3> observations;  // landmark id -> unit ray
  /// Right-camera rays of a stereo keyframe, with X_right = R_rl X_left + t_rl.
  std::unordered_map<std::uint64_t, Vec3> right_observations;
  Mat3 R_rl = Mat3::Identity();
  Vec3 t_rl = Vec3::Zero();
  bool fixed = false;
};

struct Landmark {
  std::uint64_t id = 0;
  Vec3 P = Vec3::Zero();  // world frame
  std::vector<std::uint64_t> observers;
  bool inlier = true;
};

struct OptimizationResult {
  Pose pose;
  std::vector<Landmark> landmarks;  // same order as the input landmarks
  std::vector<double> cost_trace;   // initial cost, then one entry per accepted step
  int iterations = 0;
  int accepted_steps = 0;
};

/// Ray reprojection problem with one active pose and the landmarks it
/// observes; every other keyframe is held fixed. Right-camera rays of stereo
/// keyframes add residuals through the rig extrinsic. Rotation updates compose on
/// the right (R <- R Exp(dtheta)), translation and landmarks are additive.
/// The parameter vector is [dtheta, dt, dP_0, dP_1, ...].
class KeyframeProblem {
 public:
  KeyframeProblem(const Keyframe& active, std::span<const Keyframe> fixed,
                  std::span<const Landmark> landmarks);

  std::size_t landmark_count() const { return points_.size(); }
  std::size_t residual_count() const { return residuals_.size(); }
  int parameter_count() const { return 6 + 3 * static_cast<int>(points_.size()); }

  const Pose& pose() const { return pose_; }
  const std::vector<Vec3>& points() const { return points_; }

  /// Sum of rho(||e||^2) over all residuals at the current state.
  double cost(double c) const;
  /// Cost after applying the parameter increment delta (state unchanged).
  double cost_at(const Eigen::VectorXd& delta, double c) const;
  /// Analytic gradient of cost() with respect to the parameter vector.
  Eigen::VectorXd gradient(double c) const;
  /// RMS of the un-robustified ray residual norms.
  double residual_rms() const;

  void apply(const Eigen::VectorXd& delta);

  /// Damped Gauss-Newton with the landmarks eliminated through a Schur
  /// complement onto the 6x6 pose block.
  OptimizationResult solve(const OptimizerParams& params);

 private:
  struct Residual {
    int point;         // index into points_
    int camera;        // -1 for the active pose, else index into fixed_poses_
    bool right;        // observed by the right camera of that keyframe
    Vec3 ray;          // observed unit ray
  };

  struct Extrinsic {
    Mat3 R;
    Vec3 t;
  };

  const Pose& pose_of(const Residual& res, const Pose& active) const;
  /// Point in the observing camera; q_left is the left-camera point.
  Vec3 camera_point(const Residual& res, const Vec3& q_left) const;
  Mat3 extrinsic_rotation(const Residual& res) const;
  Vec3 error(const Residual& res, const Pose& active, const Vec3& P) const;

  Pose pose_;
  std::vector<Pose> fixed_poses_;
  std::vector<Extrinsic> extrinsics_;  // fixed keyframes, then the active one last
  std::vector<Vec3> points_;
  std::vector<Residual> residuals_;
  std::vector<Landmark> landmarks_;
};

/// Refines the active keyframe pose and all landmarks it observes. Throws
/// InsufficientObservations when the active keyframe sees fewer than
/// params.min_observations of the given landmarks.
OptimizationResult optimize_keyframe(const Keyframe& active, std::span<const Keyframe> fixed,
                                     std::span<const Landmark> landmarks,
                                     const OptimizerParams& params);

}  // namespace smfvo
