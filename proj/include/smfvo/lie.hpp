#pragma once

#include "smfvo/common.hpp"

namespace smfvo {

/// Skew-symmetric matrix such that skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return m;
}

/// Rodrigues formula; second-order Taylor expansion below 1e-8 rad.
Mat3 so3_exp(const Vec3& omega);

/// Rotation vector of R, angle in [0, pi].
Vec3 so3_log(const Mat3& R);

inline double rotation_angle(const Mat3& R) { return so3_log(R).norm(); }

/// Rigid transform. Stored camera-to-world throughout the pipeline:
/// X_world = R * X_cam + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 transform(const Vec3& x) const { return R * x + t; }
  Vec3 inverse_transform(const Vec3& x) const { return R.transpose() * (x - t); }

  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  Pose operator*(const Pose& other) const {
    return {R * other.R, R * other.t + t};
  }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(R).normalized(); }

  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }
};

/// Largest absolute entry of R^T R - I.
inline double orthonormality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace smfvo
