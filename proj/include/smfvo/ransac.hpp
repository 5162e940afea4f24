#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smfvo/motion_field.hpp"

namespace smfvo {

struct RansacParams {
  double Q = 0.9999;     // success probability
  int n_s = 3;           // sample size
  int N_max = 100;       // iteration cap
  double gamma0 = 0.9;   // early-termination inlier ratio
  double tau_pi = deg2rad(1.0);
  double tau_theta = deg2rad(1.0);
  /// Use log(1 - w^n_s) in the adaptive bound instead of log(1 - w).
  bool textbook_adaptation = false;
  /// Overrides the threshold derived from tau_pi when set.
  std::optional<double> tau_u_override;

  double tau_u_ray() const;
  double tau_u_pixel(double f) const;
  void validate() const;
};

struct RansacResult {
  Twist twist;
  std::vector<std::size_t> inliers;  // ascending, unique
  int iterations = 0;
  double residual_rms = 0.0;
};

struct Hypothesis {
  Twist twist;
  std::vector<std::size_t> inliers;
  double residual_rms = 0.0;
};

/// Both tests must pass: the angle between the observed current ray r + rdot
/// and the finite-motion prediction Exp(omega)^T (P - v) is below tau_theta,
/// and the linearized flow residual is below tau_u. Strict inequalities.
bool inlier_test(const RayObservation& obs, const Twist& s, const RansacParams& params);

/// Pixel-mode counterpart: the residual uses f tan(tau_pi) and the angle test
/// runs on the rays (x + u_x, y + u_y, f) and Z (x/f, y/f, 1).
bool inlier_test_pixel(const PixelObservation& obs, double f, const Twist& s,
                       const RansacParams& params);

/// min(ceil(log(1 - Q) / log(1 - w)), current_bound). w >= 1 yields 1 and
/// w <= 0 leaves the bound unchanged.
int adaptive_iterations(double inlier_ratio, const RansacParams& params, int current_bound);
inline int adaptive_iterations(double inlier_ratio, const RansacParams& params) {
  return adaptive_iterations(inlier_ratio, params, params.N_max);
}

/// Solves the subset and classifies all observations. Throws DegenerateSystem.
Hypothesis estimate(std::span<const RayObservation> obs, std::span<const std::size_t> subset,
                    const RansacParams& params);
Hypothesis estimate_pixel(std::span<const PixelObservation> obs, double f,
                          std::span<const std::size_t> subset, const RansacParams& params);

/// Deterministic for a given seed. Fewer than n_s observations give a zero
/// twist and an empty inlier set.
RansacResult ransac(std::span<const RayObservation> obs, const RansacParams& params,
                    std::uint64_t seed);
RansacResult ransac_pixel(std::span<const PixelObservation> obs, double f,
                          const RansacParams& params, std::uint64_t seed);

}  // namespace smfvo
