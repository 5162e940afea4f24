#pragma once

#include <array>
#include <optional>

#include "smfvo/common.hpp"
#include "smfvo/lie.hpp"

namespace smfvo {

enum class CameraModel {
  Pinhole,
  PinholeRadTan,       // dist = (k1, k2, p1, p2)
  EquidistantFisheye,  // dist = (k1, k2, k3, k4), theta_d = theta (1 + k1 theta^2 + ...)
};

const char* to_string(CameraModel model) noexcept;
CameraModel camera_model_from_string(const std::string& name);

struct CameraIntrinsics {
  CameraModel model = CameraModel::Pinhole;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 4> dist{};
  int width = 0;
  int height = 0;

  /// Throws InvalidArgument when focal lengths are not positive or the
  /// principal point falls outside a non-empty image.
  void validate() const;
};

/// Maps a camera-frame point to pixel coordinates. Throws PointBehindCamera
/// when the point is outside the model's domain (Z <= 0; for fisheye the
/// angle from the optical axis must stay below 90 degrees).
Vec2 project(const CameraIntrinsics& K, const Vec3& P);

/// Non-throwing variant used on hot paths.
std::optional<Vec2> try_project(const CameraIntrinsics& K, const Vec3& P);

/// Unit viewing ray of a pixel. Throws NoConvergence when the distortion
/// inversion does not reach 1e-8 px within 20 iterations or, for fisheye, the
/// pixel lies beyond 90 degrees from the axis.
Vec3 unproject(const CameraIntrinsics& K, const Vec2& px);

std::optional<Vec3> try_unproject(const CameraIntrinsics& K, const Vec2& px);

bool in_image(const CameraIntrinsics& K, const Vec2& px, double margin = 0.0);

/// Stereo pair; X_right = R_rl * X_left + t_rl (meters).
struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  Mat3 R_rl = Mat3::Identity();
  Vec3 t_rl = Vec3::Zero();

  double baseline() const { return t_rl.norm(); }
  /// Right camera center expressed in the left camera frame.
  Vec3 right_center_in_left() const { return -(R_rl.transpose() * t_rl); }
  void validate() const;
};

}  // namespace smfvo
