#include "smfvo/lie.hpp"

#include <algorithm>
#include <cmath>

namespace smfvo {

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 W = skew(omega);
  if (theta2 < 1e-16) return Mat3::Identity() + W + 0.5 * W * W;
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * W + b * W * W;
}

Vec3 so3_log(const Mat3& R) {
  // Quaternion route is stable near 0 and near pi.
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double sin_half = v.norm();
  if (sin_half < 1e-12) return 2.0 * v;
  const double theta = 2.0 * std::atan2(sin_half, q.w());
  return v * (theta / sin_half);
}

}  // namespace smfvo
