#include <doctest.h>

#include <cmath>
#include <random>

#include "smfvo/backend.hpp"
#include "smfvo/synth.hpp"

using namespace smfvo;

namespace {

struct Problem {
  std::vector<Pose> truth;  // keyframe poses, last one active
  std::vector<Vec3> points;
  std::vector<Keyframe> fixed;
  Keyframe active;
  std::vector<Landmark> landmarks;
};

// Three keyframes viewing 100 points with exact rays in both rig cameras; the
// active pose starts off by rot_deg about x and trans_m along x, landmarks by
// a relative 1-sigma of landmark_noise.
Problem make_problem(std::uint64_t seed, double rot_deg, double trans_m, double landmark_noise,
                     bool stereo = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Problem p;
  p.points = random_points(rng, 100);
  const Twist s = random_twist(rng, 0.05, 0.2);
  p.truth = {Pose::identity(), integrate_twist(Pose::identity(), s)};
  p.truth.push_back(integrate_twist(p.truth.back(), random_twist(rng, 0.05, 0.2)));
  const StereoRig rig = default_pinhole_rig();

  std::vector<Keyframe> kfs(p.truth.size());
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    kfs[k].id = k;
    kfs[k].pose = p.truth[k];
    kfs[k].R_rl = rig.R_rl;
    kfs[k].t_rl = rig.t_rl;
    for (std::size_t i = 0; i < p.points.size(); ++i) {
      const Vec3 q = p.truth[k].inverse_transform(p.points[i]);
      kfs[k].observations[i] = q.normalized();
      if (stereo) kfs[k].right_observations[i] = (rig.R_rl * q + rig.t_rl).normalized();
    }
  }
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    Landmark lm;
    lm.id = i;
    lm.P = p.points[i] * (1.0 + landmark_noise * g(rng));
    p.landmarks.push_back(lm);
  }
  p.active = kfs.back();
  p.active.pose.R = p.active.pose.R * so3_exp(Vec3(deg2rad(rot_deg), 0, 0));
  p.active.pose.t += Vec3(trans_m, 0, 0);
  p.fixed.assign(kfs.begin(), kfs.end() - 1);
  return p;
}

double pose_error(const Pose& a, const Pose& b) {
  return std::max(rotation_angle(a.R.transpose() * b.R), (a.t - b.t).norm());
}

}  // namespace

TEST_CASE("Cauchy loss values") {
  const auto z = cauchy_loss(0.0, 0.3);
  CHECK(z.value == 0.0);
  CHECK(z.weight == 1.0);
  CHECK(cauchy_loss(1.0, 1.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cauchy_loss(1.0, 1.0).value == doctest::Approx(0.693147).epsilon(1e-6));
  // Logarithmic growth: ten times the residual adds c^2 log 10 asymptotically.
  const double c = 0.5;
  const double big = cauchy_loss(1e8, c).value, bigger = cauchy_loss(1e9, c).value;
  CHECK(bigger - big == doctest::Approx(c * c * std::log(10.0)).epsilon(1e-6));
  CHECK(cauchy_loss(1e12, c).weight < 1e-12);
}

TEST_CASE("keyframe policy") {
  KeyframePolicy p;
  CHECK(should_create_keyframe(p.tau_n - 1, 0, Pose::identity(), p));
  CHECK_FALSE(should_create_keyframe(p.tau_n + 100, 0, Pose::identity(), p));
  CHECK(should_create_keyframe(p.tau_n + 100, p.max_elapsed + 1, Pose::identity(), p));
  Pose rot{so3_exp(Vec3(0, p.rot_thresh + 1e-9, 0)), Vec3::Zero()};
  CHECK(should_create_keyframe(p.tau_n + 100, 0, rot, p));
  Pose far{Mat3::Identity(), Vec3(0, 0, p.trans_thresh + 1e-9)};
  CHECK(should_create_keyframe(p.tau_n + 100, 0, far, p));
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    // Noisy rays so the gradient is not near zero.
    Problem p = make_problem(seed, 2.0, 0.1, 0.02);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> g;
    for (auto& [id, ray] : p.active.observations) ray = (ray + 0.01 * Vec3(g(rng), g(rng), g(rng))).normalized();
    KeyframeProblem prob(p.active, p.fixed, p.landmarks);
    const double c = 0.01;
    const Eigen::VectorXd grad = prob.gradient(c);
    double worst = 0.0;
    for (int j = 0; j < prob.parameter_count(); ++j) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(prob.parameter_count());
      d[j] = 1e-6;
      const double fd = (prob.cost_at(d, c) - prob.cost_at(-d, c)) / 2e-6;
      const double scale = std::max(std::abs(grad[j]), 1e-3 * grad.cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(fd - grad[j]) / scale);
    }
    CAPTURE(seed);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("perturbed keyframe recovers the truth") {
  for (bool stereo : {true, false}) {
    Problem p = make_problem(7, 1.0, 0.05, 0.01, stereo);
    KeyframeProblem prob(p.active, p.fixed, p.landmarks);
    const double rms0 = prob.residual_rms();
    OptimizerParams params;
    params.max_iters = 50;
    const auto r = prob.solve(params);
    CAPTURE(stereo);
    CHECK(pose_error(r.pose, p.truth.back()) < 1e-6);
    CHECK(prob.residual_rms() <= 0.01 * rms0);
    CHECK(orthonormality_error(r.pose.R) < 1e-9);
  }
}

TEST_CASE("cost trace never increases") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Problem p = make_problem(seed, 3.0, 0.1, 0.03);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (auto& [id, ray] : p.active.observations) ray = (ray + 0.003 * Vec3(g(rng), g(rng), g(rng))).normalized();
    const auto r = optimize_keyframe(p.active, p.fixed, p.landmarks, OptimizerParams{});
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i) CHECK(r.cost_trace[i] < r.cost_trace[i - 1]);
    CHECK(static_cast<int>(r.cost_trace.size()) == r.accepted_steps + 1);
  }
}

TEST_CASE("an optimal keyframe is a fixed point") {
  Problem p = make_problem(3, 0.0, 0.0, 0.0);
  const auto r = optimize_keyframe(p.active, p.fixed, p.landmarks, OptimizerParams{});
  CHECK(r.accepted_steps == 0);
  CHECK(pose_error(r.pose, p.truth.back()) < 1e-12);
}

TEST_CASE("fixed keyframes are untouched and outliers are flagged") {
  Problem p = make_problem(4, 1.0, 0.02, 0.01);
  const std::vector<Keyframe> before = p.fixed;
  // A landmark far from where every keyframe sees it.
  p.active.observations[5] = Vec3(1, 0, 0);
  p.active.right_observations[5] = Vec3(1, 0, 0);
  const auto r = optimize_keyframe(p.active, p.fixed, p.landmarks, OptimizerParams{});
  for (std::size_t k = 0; k < before.size(); ++k) {
    CHECK(p.fixed[k].pose.R == before[k].pose.R);
    CHECK(p.fixed[k].pose.t == before[k].pose.t);
  }
  CHECK_FALSE(r.landmarks[5].inlier);
  int inliers = 0;
  for (const auto& lm : r.landmarks) inliers += lm.inlier ? 1 : 0;
  CHECK(inliers >= 95);
}

TEST_CASE("too few observations") {
  Problem p = make_problem(5, 0.0, 0.0, 0.0);
  OptimizerParams params;
  params.min_observations = 1000;
  try {
    optimize_keyframe(p.active, p.fixed, p.landmarks, params);
    FAIL("expected InsufficientObservations");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientObservations);
  }
}

TEST_CASE("unobserved landmarks are rejected") {
  Problem p = make_problem(6, 0.0, 0.0, 0.0);
  Landmark stray;
  stray.id = 9999;
  p.landmarks.push_back(stray);
  CHECK_THROWS_AS(KeyframeProblem(p.active, p.fixed, p.landmarks), Error);
}

TEST_CASE("optimizer parameter validation") {
  OptimizerParams p;
  p.cauchy_c = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.damping_scale = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
}
