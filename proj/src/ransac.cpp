#include "smfvo/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "smfvo/lie.hpp"

namespace smfvo {

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

bool angle_test(const Vec3& observed_cur, const Vec3& P_prev, const Twist& s, double tau_theta) {
  const Vec3 predicted = so3_exp(s.omega).transpose() * (P_prev - s.v);
  return angle_between(observed_cur, predicted) < tau_theta;
}

// Unbiased integer in [0, n) from a 64-bit engine; stream depends only on
// the seed.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

void draw_sample(std::mt19937_64& rng, std::size_t n, int k, std::vector<std::size_t>& out) {
  out.clear();
  while (static_cast<int>(out.size()) < k) {
    const std::size_t idx = uniform_index(rng, n);
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
}

struct RayKernel {
  std::span<const RayObservation> obs;
  const RansacParams& params;

  std::size_t size() const { return obs.size(); }
  std::optional<TwistSolution> fit(std::span<const std::size_t> subset) const {
    return try_solve_twist_ray(obs, subset);
  }
  bool inlier(std::size_t i, const Twist& s) const { return inlier_test(obs[i], s, params); }
};

struct PixelKernel {
  std::span<const PixelObservation> obs;
  double f;
  const RansacParams& params;

  std::size_t size() const { return obs.size(); }
  std::optional<TwistSolution> fit(std::span<const std::size_t> subset) const {
    return try_solve_twist_pixel(obs, f, subset);
  }
  bool inlier(std::size_t i, const Twist& s) const {
    return inlier_test_pixel(obs[i], f, s, params);
  }
};

template <typename Kernel>
std::optional<Hypothesis> try_estimate(const Kernel& kernel, std::span<const std::size_t> subset) {
  const auto sol = kernel.fit(subset);
  if (!sol) return std::nullopt;
  Hypothesis h;
  h.twist = sol->twist;
  h.residual_rms = sol->residual_rms;
  for (std::size_t i = 0; i < kernel.size(); ++i)
    if (kernel.inlier(i, h.twist)) h.inliers.push_back(i);
  return h;
}

template <typename Kernel>
RansacResult run_ransac(const Kernel& kernel, const RansacParams& params, std::uint64_t seed) {
  params.validate();
  RansacResult result;
  const std::size_t n = kernel.size();
  if (n < static_cast<std::size_t>(params.n_s)) return result;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> sample;
  sample.reserve(params.n_s);

  Hypothesis best;
  int bound = params.N_max;
  int iteration = 0;
  while (iteration < bound) {
    draw_sample(rng, n, params.n_s, sample);
    ++iteration;
    auto hyp = try_estimate(kernel, sample);
    if (!hyp) continue;  // degenerate sample
    if (hyp->inliers.size() > best.inliers.size()) {
      best = std::move(*hyp);
      const double ratio = static_cast<double>(best.inliers.size()) / static_cast<double>(n);
      if (ratio > params.gamma0) break;
      bound = adaptive_iterations(ratio, params, bound);
    }
  }

  if (best.inliers.size() > static_cast<std::size_t>(params.n_s)) {
    auto refit = try_estimate(kernel, best.inliers);
    if (refit && refit->inliers.size() >= best.inliers.size()) best = std::move(*refit);
  }

  result.twist = best.twist;
  result.inliers = std::move(best.inliers);
  result.iterations = iteration;
  result.residual_rms = best.residual_rms;
  return result;
}

}  // namespace

double RansacParams::tau_u_ray() const {
  return tau_u_override ? *tau_u_override : 2.0 * std::sin(tau_pi / 2.0);
}

double RansacParams::tau_u_pixel(double f) const {
  return tau_u_override ? *tau_u_override : f * std::tan(tau_pi);
}

void RansacParams::validate() const {
  if (!(Q > 0.0 && Q < 1.0)) throw Error(ErrorCode::InvalidArgument, "ransac.Q must be in (0, 1)");
  if (n_s < 3) throw Error(ErrorCode::InvalidArgument, "ransac.n_s must be >= 3");
  if (N_max < 1) throw Error(ErrorCode::InvalidArgument, "ransac.N_max must be >= 1");
  if (!(gamma0 > 0.0 && gamma0 <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "ransac.gamma0 must be in (0, 1]");
  if (!(tau_pi > 0.0) || !(tau_theta > 0.0))
    throw Error(ErrorCode::InvalidArgument, "ransac thresholds must be positive");
}

bool inlier_test(const RayObservation& obs, const Twist& s, const RansacParams& params) {
  if (!angle_test(obs.r + obs.rdot, obs.P, s, params.tau_theta)) return false;
  const Vec3 residual = obs.rdot - predict_ray_flow(obs.r, obs.d, s);
  return residual.norm() < params.tau_u_ray();
}

bool inlier_test_pixel(const PixelObservation& obs, double f, const Twist& s,
                       const RansacParams& params) {
  const Vec3 cur(obs.p.x() + obs.u.x(), obs.p.y() + obs.u.y(), f);
  const Vec3 P(obs.p.x() * obs.Z / f, obs.p.y() * obs.Z / f, obs.Z);
  if (!angle_test(cur, P, s, params.tau_theta)) return false;
  const Vec2 residual = obs.u - predict_pixel_flow(obs, f, s);
  return residual.norm() < params.tau_u_pixel(f);
}

int adaptive_iterations(double w, const RansacParams& params, int current_bound) {
  if (!(w > 0.0)) return current_bound;
  if (w >= 1.0) return std::min(1, current_bound);
  const double p = params.textbook_adaptation ? std::pow(w, params.n_s) : w;
  if (p >= 1.0) return std::min(1, current_bound);
  const double needed = std::ceil(std::log(1.0 - params.Q) / std::log(1.0 - p));
  if (!(needed < static_cast<double>(current_bound))) return current_bound;
  return std::max(1, static_cast<int>(needed));
}

Hypothesis estimate(std::span<const RayObservation> obs, std::span<const std::size_t> subset,
                    const RansacParams& params) {
  if (auto h = try_estimate(RayKernel{obs, params}, subset)) return std::move(*h);
  throw Error(ErrorCode::DegenerateSystem, "degenerate sample");
}

Hypothesis estimate_pixel(std::span<const PixelObservation> obs, double f,
                          std::span<const std::size_t> subset, const RansacParams& params) {
  if (auto h = try_estimate(PixelKernel{obs, f, params}, subset)) return std::move(*h);
  throw Error(ErrorCode::DegenerateSystem, "degenerate sample");
}

RansacResult ransac(std::span<const RayObservation> obs, const RansacParams& params,
                    std::uint64_t seed) {
  return run_ransac(RayKernel{obs, params}, params, seed);
}

RansacResult ransac_pixel(std::span<const PixelObservation> obs, double f,
                          const RansacParams& params, std::uint64_t seed) {
  return run_ransac(PixelKernel{obs, f, params}, params, seed);
}

}  // namespace smfvo
