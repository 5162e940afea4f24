#include "smfvo/motion_field.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>

#include "smfvo/lie.hpp"

namespace smfvo {

namespace {

using RayRows = Eigen::Matrix<double, 3, 6>;
using PixelRows = Eigen::Matrix<double, 2, 6>;

RayRows ray_rows(const RayObservation& o) {
  RayRows M;
  const RayBlock blk = ray_block(o.r, o.d);
  M << blk.A, blk.B;
  return M;
}

PixelRows pixel_rows(const PixelObservation& o, double f) {
  const PixelJacobian J = pixel_jacobian(o.p, f);
  PixelRows W;
  W << J.A, J.B / o.Z;
  return W;
}

// Visits observations in a fixed order so the 6x6 accumulation is
// bit-stable across runs.
template <typename Fn>
void for_each_index(std::size_t n, std::span<const std::size_t> subset, Fn&& fn) {
  if (subset.empty()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  } else {
    for (std::size_t i : subset) fn(i);
  }
}

double condition_number(const Mat6& H) {
  Eigen::SelfAdjointEigenSolver<Mat6> es(H, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(5);
  if (!(hi > 0.0)) return std::numeric_limits<double>::infinity();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Generic stacked least squares: rows(i) gives the k x 6 block and rhs(i)
// the k-vector of observation i.
template <int K, typename RowsFn, typename RhsFn>
std::optional<TwistSolution> solve_stacked(std::size_t n, std::span<const std::size_t> subset,
                                           RowsFn&& rows, RhsFn&& rhs) {
  const std::size_t count = subset.empty() ? n : subset.size();
  if (count < 3) return std::nullopt;

  Mat6 H = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  for_each_index(n, subset, [&](std::size_t i) {
    const Eigen::Matrix<double, K, 6> M = rows(i);
    const Eigen::Matrix<double, K, 1> y = rhs(i);
    H.noalias() += M.transpose() * M;
    g.noalias() += M.transpose() * y;
  });

  const double cond = condition_number(H);
  if (!(cond <= kDegenerateCondition)) return std::nullopt;

  Vec6 s;
  if (cond <= kQrFallbackCondition) {
    s = H.ldlt().solve(g);
  } else {
    Eigen::Matrix<double, Eigen::Dynamic, 6> W(K * count, 6);
    Eigen::VectorXd y(K * count);
    std::size_t row = 0;
    for_each_index(n, subset, [&](std::size_t i) {
      W.template middleRows<K>(row) = rows(i);
      y.template segment<K>(row) = rhs(i);
      row += K;
    });
    s = W.colPivHouseholderQr().solve(y);
  }
  if (!s.allFinite()) return std::nullopt;

  double sq = 0.0;
  for_each_index(n, subset, [&](std::size_t i) { sq += (rows(i) * s - rhs(i)).squaredNorm(); });

  TwistSolution out;
  out.twist = Twist::from_vector(s);
  out.residual_rms = std::sqrt(sq / static_cast<double>(K * count));
  out.condition = cond;
  return out;
}

}  // namespace

PixelJacobian pixel_jacobian(const Vec2& p, double f) {
  const double x = p.x(), y = p.y();
  PixelJacobian J;
  J.A << x * y / f, -f - x * x / f, y,
         f + y * y / f, -x * y / f, -x;
  J.B << -f, 0.0, x,
         0.0, -f, y;
  return J;
}

RayBlock ray_block(const Vec3& r, double d) {
  return {skew(r), (r * r.transpose() - Mat3::Identity()) / d};
}

Vec2 predict_pixel_flow(const PixelObservation& obs, double f, const Twist& s) {
  const PixelJacobian J = pixel_jacobian(obs.p, f);
  return J.A * s.omega + J.B * s.v / obs.Z;
}

Vec3 predict_ray_flow(const Vec3& r, double d, const Twist& s) {
  // [r]x w + (r r^T - I) v / d, without forming the matrices.
  return r.cross(s.omega) + (r * r.dot(s.v) - s.v) / d;
}

std::optional<TwistSolution> try_solve_twist_ray(std::span<const RayObservation> obs,
                                                 std::span<const std::size_t> subset) {
  return solve_stacked<3>(
      obs.size(), subset, [&](std::size_t i) { return ray_rows(obs[i]); },
      [&](std::size_t i) { return obs[i].rdot; });
}

std::optional<TwistSolution> try_solve_twist_pixel(std::span<const PixelObservation> obs, double f,
                                                   std::span<const std::size_t> subset) {
  if (!(f > 0.0)) throw Error(ErrorCode::InvalidArgument, "focal length must be positive");
  return solve_stacked<2>(
      obs.size(), subset, [&](std::size_t i) { return pixel_rows(obs[i], f); },
      [&](std::size_t i) { return obs[i].u; });
}

TwistSolution solve_twist_ray(std::span<const RayObservation> obs) {
  if (obs.size() < 3)
    throw Error(ErrorCode::InsufficientObservations, "need at least 3 ray observations");
  if (auto sol = try_solve_twist_ray(obs)) return *sol;
  throw Error(ErrorCode::DegenerateSystem, "ray motion-field system is degenerate");
}

TwistSolution solve_twist_pixel(std::span<const PixelObservation> obs, double f) {
  if (obs.size() < 3)
    throw Error(ErrorCode::InsufficientObservations, "need at least 3 pixel observations");
  if (auto sol = try_solve_twist_pixel(obs, f)) return *sol;
  throw Error(ErrorCode::DegenerateSystem, "pixel motion-field system is degenerate");
}

}  // namespace smfvo
