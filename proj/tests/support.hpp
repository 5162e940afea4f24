#pragma once

#include <random>
#include <vector>

#include "smfvo/motion_field.hpp"
#include "smfvo/synth.hpp"

namespace smfvo::test {

// Linear motion field of a world-static point, written from the point
// velocity Xdot = X x omega - v rather than through ray_block.
inline Vec3 ray_flow_oracle(const Vec3& X, const Twist& s) {
  const double d = X.norm();
  const Vec3 r = X / d;
  const Vec3 Xdot = X.cross(s.omega) - s.v;
  return (Xdot - r * r.dot(Xdot)) / d;
}

inline double relative_error(const Twist& est, const Twist& truth) {
  return (est.vector() - truth.vector()).norm() / truth.vector().norm();
}

struct LabelledObservations {
  std::vector<RayObservation> obs;
  std::vector<bool> inlier;
};

// n_in exact observations followed by n_out whose flow is replaced by a random
// tangent vector of 0.05..0.3 (several degrees of apparent motion).
inline LabelledObservations ray_observations_with_outliers(std::mt19937_64& rng, const Twist& s, int n_in,
                                                           int n_out) {
  LabelledObservations out;
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> mag(0.05, 0.3);
  const auto pts = random_points(rng, n_in + n_out);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool good = static_cast<int>(i) < n_in;
    Vec3 flow = ray_flow_oracle(pts[i], s);
    if (!good) {
      const Vec3 r = pts[i].normalized();
      Vec3 t = Vec3(g(rng), g(rng), g(rng));
      t -= r * r.dot(t);
      flow = mag(rng) * t.normalized();
    }
    out.obs.push_back(RayObservation::from_landmark(pts[i], flow));
    out.inlier.push_back(good);
  }
  return out;
}

}  // namespace smfvo::test
