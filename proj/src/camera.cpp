#include "smfvo/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace smfvo {

namespace {

constexpr int kMaxUndistortIterations = 20;
constexpr double kUndistortTolerancePx = 1e-8;

struct Distorted {
  Vec2 m;
  Eigen::Matrix2d J;  // d(distorted)/d(undistorted)
};

Distorted radtan_distort(const std::array<double, 4>& d, const Vec2& x) {
  const double k1 = d[0], k2 = d[1], p1 = d[2], p2 = d[3];
  const double xx = x.x() * x.x(), yy = x.y() * x.y(), xy = x.x() * x.y();
  const double r2 = xx + yy;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  const double dradial = k1 + 2.0 * k2 * r2;  // d(radial)/d(r2)

  Distorted out;
  out.m.x() = x.x() * radial + 2.0 * p1 * xy + p2 * (r2 + 2.0 * xx);
  out.m.y() = x.y() * radial + p1 * (r2 + 2.0 * yy) + 2.0 * p2 * xy;
  out.J(0, 0) = radial + 2.0 * xx * dradial + 2.0 * p1 * x.y() + 6.0 * p2 * x.x();
  out.J(0, 1) = 2.0 * xy * dradial + 2.0 * p1 * x.x() + 2.0 * p2 * x.y();
  out.J(1, 0) = 2.0 * xy * dradial + 2.0 * p1 * x.x() + 2.0 * p2 * x.y();
  out.J(1, 1) = radial + 2.0 * yy * dradial + 6.0 * p1 * x.y() + 2.0 * p2 * x.x();
  return out;
}

// theta_d(theta) for the equidistant model and its derivative.
std::pair<double, double> equidistant_theta_d(const std::array<double, 4>& k, double theta) {
  const double t2 = theta * theta;
  const double poly = 1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3])));
  const double dpoly =
      1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])));
  return {theta * poly, dpoly};
}

std::optional<Vec2> undistort_radtan(const CameraIntrinsics& K, const Vec2& target) {
  const double f = std::max(K.fx, K.fy);
  Vec2 x = target;
  Distorted cur = radtan_distort(K.dist, x);
  Vec2 err = cur.m - target;
  for (int it = 0; it < kMaxUndistortIterations; ++it) {
    if (err.cwiseAbs().maxCoeff() * f < kUndistortTolerancePx) return x;
    const Vec2 step = cur.J.partialPivLu().solve(err);
    // Damping: halve until the residual shrinks.
    double alpha = 1.0;
    for (int h = 0; h < 8; ++h, alpha *= 0.5) {
      const Vec2 trial = x - alpha * step;
      const Distorted next = radtan_distort(K.dist, trial);
      const Vec2 trial_err = next.m - target;
      if (trial_err.squaredNorm() < err.squaredNorm() || h == 7) {
        x = trial;
        cur = next;
        err = trial_err;
        break;
      }
    }
  }
  if (err.cwiseAbs().maxCoeff() * f < kUndistortTolerancePx) return x;
  return std::nullopt;
}

std::optional<double> invert_equidistant(const CameraIntrinsics& K, double theta_d) {
  const double f = std::max(K.fx, K.fy);
  double theta = theta_d;
  for (int it = 0; it <= kMaxUndistortIterations; ++it) {
    const auto [value, slope] = equidistant_theta_d(K.dist, theta);
    const double err = value - theta_d;
    if (std::abs(err) * f < kUndistortTolerancePx) return theta;
    if (it == kMaxUndistortIterations || slope <= 0.0) break;
    double step = err / slope;
    // Damping keeps theta inside the monotone region.
    for (int h = 0; h < 8; ++h, step *= 0.5) {
      const double trial = theta - step;
      if (trial >= 0.0 && std::abs(equidistant_theta_d(K.dist, trial).first - theta_d) < std::abs(err)) {
        theta = trial;
        break;
      }
      if (h == 7) theta = std::max(0.0, trial);
    }
  }
  return std::nullopt;
}

}  // namespace

const char* to_string(CameraModel model) noexcept {
  switch (model) {
    case CameraModel::Pinhole: return "pinhole";
    case CameraModel::PinholeRadTan: return "radtan";
    case CameraModel::EquidistantFisheye: return "equidistant";
  }
  return "unknown";
}

CameraModel camera_model_from_string(const std::string& name) {
  if (name == "pinhole") return CameraModel::Pinhole;
  if (name == "radtan" || name == "pinhole-radtan") return CameraModel::PinholeRadTan;
  if (name == "equidistant" || name == "fisheye" || name == "kannala-brandt")
    return CameraModel::EquidistantFisheye;
  throw Error(ErrorCode::InvalidArgument, "unknown camera model '" + name + "'");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  if (width > 0 && height > 0) {
    if (cx < 0.0 || cx > width || cy < 0.0 || cy > height)
      throw Error(ErrorCode::InvalidArgument, "principal point outside the image");
  }
}

void StereoRig::validate() const {
  left.validate();
  right.validate();
  if (!(baseline() > 0.0)) throw Error(ErrorCode::InvalidArgument, "stereo baseline must be non-zero");
  if (orthonormality_error(R_rl) > 1e-6 || R_rl.determinant() < 0.0)
    throw Error(ErrorCode::InvalidArgument, "R_rl is not a rotation");
}

std::optional<Vec2> try_project(const CameraIntrinsics& K, const Vec3& P) {
  if (!(P.z() > 0.0) || !P.allFinite()) return std::nullopt;
  Vec2 m;
  switch (K.model) {
    case CameraModel::Pinhole:
      m = P.head<2>() / P.z();
      break;
    case CameraModel::PinholeRadTan:
      m = radtan_distort(K.dist, P.head<2>() / P.z()).m;
      break;
    case CameraModel::EquidistantFisheye: {
      const double r = P.head<2>().norm();
      const double theta = std::atan2(r, P.z());
      const double theta_d = equidistant_theta_d(K.dist, theta).first;
      // theta_d / r -> 1 / Z on the optical axis.
      const double scale = r > 1e-12 * P.z() ? theta_d / r : 1.0 / P.z();
      m = P.head<2>() * scale;
      break;
    }
  }
  return Vec2(K.fx * m.x() + K.cx, K.fy * m.y() + K.cy);
}

Vec2 project(const CameraIntrinsics& K, const Vec3& P) {
  if (auto px = try_project(K, P)) return *px;
  throw Error(ErrorCode::PointBehindCamera, "point outside the projection domain");
}

std::optional<Vec3> try_unproject(const CameraIntrinsics& K, const Vec2& px) {
  const Vec2 m((px.x() - K.cx) / K.fx, (px.y() - K.cy) / K.fy);
  switch (K.model) {
    case CameraModel::Pinhole:
      return Vec3(m.x(), m.y(), 1.0).normalized();
    case CameraModel::PinholeRadTan: {
      const auto x = undistort_radtan(K, m);
      if (!x) return std::nullopt;
      return Vec3(x->x(), x->y(), 1.0).normalized();
    }
    case CameraModel::EquidistantFisheye: {
      const double theta_d = m.norm();
      if (theta_d < 1e-15) return Vec3(0.0, 0.0, 1.0);
      const auto theta = invert_equidistant(K, theta_d);
      if (!theta || *theta >= std::numbers::pi / 2.0) return std::nullopt;
      const double s = std::sin(*theta) / theta_d;
      return Vec3(m.x() * s, m.y() * s, std::cos(*theta)).normalized();
    }
  }
  return std::nullopt;
}

Vec3 unproject(const CameraIntrinsics& K, const Vec2& px) {
  if (auto r = try_unproject(K, px)) return *r;
  throw Error(ErrorCode::NoConvergence, "distortion inversion did not converge");
}

bool in_image(const CameraIntrinsics& K, const Vec2& px, double margin) {
  return px.x() >= margin && px.y() >= margin && px.x() <= K.width - 1 - margin &&
         px.y() <= K.height - 1 - margin;
}

}  // namespace smfvo
