#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "smfvo/common.hpp"

namespace smfvo {

/// Per-frame camera motion s = [omega; v]. omega in rad/frame, v in m/frame.
/// The twist maps the previous camera frame to the current one:
///   X_cur = Exp(omega)^T (X_prev - v).
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 vector() const {
    Vec6 s;
    s << omega, v;
    return s;
  }
  static Twist from_vector(const Vec6& s) { return {s.head<3>(), s.tail<3>()}; }
  static Twist zero() { return {}; }
};

/// Pixel-based observation. p is relative to the principal point; the
/// implicit third coordinate is the focal length f. u is px/frame and Z the
/// depth along the optical axis.
struct PixelObservation {
  Vec2 p = Vec2::Zero();
  Vec2 u = Vec2::Zero();
  double Z = 1.0;
};

/// Ray-based observation, anchored in the previous camera frame:
/// r = previous unit ray, rdot = r_cur - r_prev, d = ||P||, P = d r.
struct RayObservation {
  Vec3 r = Vec3::UnitZ();
  Vec3 rdot = Vec3::Zero();
  double d = 1.0;
  Vec3 P = Vec3::UnitZ();

  static RayObservation from_landmark(const Vec3& P_prev, const Vec3& rdot) {
    const double d = P_prev.norm();
    return {P_prev / d, rdot, d, P_prev};
  }
};

struct PixelJacobian {
  Eigen::Matrix<double, 2, 3> A;
  Eigen::Matrix<double, 2, 3> B;
};

/// A(p) and B(p) such that u = [A | B/Z] s.
PixelJacobian pixel_jacobian(const Vec2& p, double f);

struct RayBlock {
  Mat3 A;  // [r]x
  Mat3 B;  // (r r^T - I) / d
};

RayBlock ray_block(const Vec3& r, double d);

Vec2 predict_pixel_flow(const PixelObservation& obs, double f, const Twist& s);
Vec3 predict_ray_flow(const Vec3& r, double d, const Twist& s);

struct TwistSolution {
  Twist twist;
  double residual_rms = 0.0;
  double condition = 1.0;  // of the 6x6 normal matrix
};

/// Above this the fast normal-equation path hands over to column-pivoted QR
/// on the stacked system.
inline constexpr double kQrFallbackCondition = 1e8;
/// Above this the system is rejected as degenerate.
inline constexpr double kDegenerateCondition = 1e12;

/// Least-squares twist over the stacked 3n x 6 system. An empty subset means
/// all observations. Returns nullopt when the system is degenerate or has
/// fewer than 3 observations.
std::optional<TwistSolution> try_solve_twist_ray(std::span<const RayObservation> obs,
                                                 std::span<const std::size_t> subset = {});
std::optional<TwistSolution> try_solve_twist_pixel(std::span<const PixelObservation> obs, double f,
                                                   std::span<const std::size_t> subset = {});

/// Throwing variants (DegenerateSystem / InsufficientObservations).
TwistSolution solve_twist_ray(std::span<const RayObservation> obs);
TwistSolution solve_twist_pixel(std::span<const PixelObservation> obs, double f);

}  // namespace smfvo
