#include <doctest.h>

#include <cmath>
#include <numbers>

#include "smfvo/lie.hpp"
#include "smfvo/ransac.hpp"
#include "support.hpp"

using namespace smfvo;
using smfvo::test::ray_flow_oracle;
using smfvo::test::relative_error;

TEST_CASE("adaptive iteration bound") {
  RansacParams p;
  // log(1e-4) / log(0.5) = 13.29, rounded up.
  CHECK(adaptive_iterations(0.5, p) == static_cast<int>(std::ceil(std::log(1e-4) / std::log(0.5))));
  CHECK(adaptive_iterations(0.5, p) == 14);
  CHECK(adaptive_iterations(1.0, p) == 1);
  CHECK(adaptive_iterations(0.999999, p) == 1);
  for (double w = 0.001; w < 1.0; w += 0.013) CHECK(adaptive_iterations(w, p) <= p.N_max);
  CHECK(adaptive_iterations(0.0, p) == p.N_max);
  CHECK(adaptive_iterations(0.5, p, 9) == 9);

  p.textbook_adaptation = true;
  // log(1e-4) / log(1 - 0.125) = 68.97
  CHECK(adaptive_iterations(0.5, p) == 69);
}

TEST_CASE("inlier test accepts the truth and rejects large residuals") {
  std::mt19937_64 rng(21);
  RansacParams p;
  for (int i = 0; i < 50; ++i) {
    const Twist s = random_twist(rng, 0.01, 0.03);
    const Vec3 X = random_points(rng, 1).front();
    // Exact finite-motion flow passes both tests at the true twist for small
    // motions.
    const Vec3 cur = so3_exp(s.omega).transpose() * (X - s.v);
    RayObservation obs = RayObservation::from_landmark(X, cur.normalized() - X.normalized());
    CHECK(inlier_test(obs, s, p));

    const Vec3 r = obs.r;
    Vec3 t = r.cross(Vec3::UnitX()).normalized();
    obs.rdot = ray_flow_oracle(X, s) + 2.0 * p.tau_u_ray() * t;
    CHECK_FALSE(inlier_test(obs, s, p));
  }
}

TEST_CASE("residual test is strict at the threshold") {
  RansacParams p;
  p.tau_theta = 1.0;  // keep the angle test out of the way
  const Vec3 X(0.0, 0.0, 4.0);
  const Twist s = Twist::zero();
  RayObservation obs = RayObservation::from_landmark(X, Vec3::Zero());
  obs.rdot = Vec3(p.tau_u_ray(), 0.0, 0.0);
  CHECK_FALSE(inlier_test(obs, s, p));
  obs.rdot = Vec3(std::nextafter(p.tau_u_ray(), 0.0), 0.0, 0.0);
  CHECK(inlier_test(obs, s, p));

  p.tau_u_override = 0.25;
  obs.rdot = Vec3(0.0, 0.25, 0.0);
  CHECK_FALSE(inlier_test(obs, s, p));
}

TEST_CASE("angle test is strict at the threshold") {
  RansacParams p;
  p.tau_u_override = 10.0;
  const Vec3 X(0.0, 0.0, 4.0);
  // Current ray rotated by exactly tau_theta about x, zero twist.
  const double a = p.tau_theta;
  const Vec3 cur(0.0, std::sin(a), std::cos(a));
  RayObservation obs = RayObservation::from_landmark(X, cur - Vec3::UnitZ());
  CHECK_FALSE(inlier_test(obs, Twist::zero(), p));
  const double b = 0.999 * a;
  obs.rdot = Vec3(0.0, std::sin(b), std::cos(b)) - Vec3::UnitZ();
  CHECK(inlier_test(obs, Twist::zero(), p));
}

TEST_CASE("estimate on exact subsets and with an outlier") {
  std::mt19937_64 rng(22);
  const Twist s = random_twist(rng, 0.01, 0.02);
  auto data = test::ray_observations_with_outliers(rng, s, 30, 1);
  RansacParams p;
  const std::vector<std::size_t> clean = {0, 1, 2};
  const Hypothesis good = estimate(data.obs, clean, p);
  CHECK(relative_error(good.twist, s) < 1e-8);
  CHECK(good.inliers.size() == 30);

  const std::vector<std::size_t> dirty = {0, 1, 30};
  const Hypothesis bad = estimate(data.obs, dirty, p);
  CHECK(bad.inliers.size() < good.inliers.size());

  std::vector<RayObservation> three(data.obs.begin(), data.obs.begin() + 3);
  const Hypothesis all = estimate(three, clean, p);
  CHECK(all.inliers.size() == 3);
}

TEST_CASE("all-exact data exits early with every inlier") {
  std::mt19937_64 rng(23);
  const Twist s = random_twist(rng, 0.01, 0.02);
  auto data = test::ray_observations_with_outliers(rng, s, 100, 0);
  const auto r = ransac(data.obs, RansacParams{}, 5);
  CHECK(r.inliers.size() == 100);
  CHECK(r.iterations <= 2);
  CHECK(relative_error(r.twist, s) < 1e-8);
}

TEST_CASE("fewer observations than the sample size") {
  std::vector<RayObservation> two(2);
  const auto r = ransac(two, RansacParams{}, 1);
  CHECK(r.inliers.empty());
  CHECK(r.twist.vector().norm() == 0.0);
  CHECK(r.iterations == 0);
}

TEST_CASE("60 inliers and 40 gross outliers") {
  std::mt19937_64 rng(24);
  int good_runs = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const Twist s = random_twist(rng, 0.02, 0.05);
    auto data = test::ray_observations_with_outliers(rng, s, 60, 40);
    RansacParams p;
    const auto r = ransac(data.obs, p, static_cast<std::uint64_t>(seed));
    int recovered = 0;
    for (std::size_t i : r.inliers) recovered += data.inlier[i] ? 1 : 0;
    if ((r.twist.vector() - s.vector()).norm() < 1e-6 && recovered >= 57) ++good_runs;
    CHECK(r.iterations <= p.N_max);
  }
  CHECK(good_runs >= 99);
}

TEST_CASE("identical seeds give identical results") {
  std::mt19937_64 rng(25);
  const Twist s = random_twist(rng, 0.02, 0.05);
  auto data = test::ray_observations_with_outliers(rng, s, 50, 50);
  const auto a = ransac(data.obs, RansacParams{}, 99);
  const auto b = ransac(data.obs, RansacParams{}, 99);
  CHECK(a.inliers == b.inliers);
  CHECK(a.iterations == b.iterations);
  for (int i = 0; i < 6; ++i) CHECK(a.twist.vector()[i] == b.twist.vector()[i]);
}

TEST_CASE("inliers are sorted and unique, and the refit never shrinks consensus") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const Twist s = random_twist(rng, 0.02, 0.05);
    auto data = test::ray_observations_with_outliers(rng, s, 40, 30);
    RansacParams p;
    const auto r = ransac(data.obs, p, static_cast<std::uint64_t>(trial));
    CHECK(std::is_sorted(r.inliers.begin(), r.inliers.end()));
    CHECK(std::adjacent_find(r.inliers.begin(), r.inliers.end()) == r.inliers.end());
    // Re-classifying with the returned twist reproduces the reported set.
    std::vector<std::size_t> again;
    for (std::size_t i = 0; i < data.obs.size(); ++i)
      if (inlier_test(data.obs[i], r.twist, p)) again.push_back(i);
    CHECK(again == r.inliers);
  }
}

TEST_CASE("pixel RANSAC recovers the twist") {
  std::mt19937_64 rng(27);
  const double f = 400.0;
  const Twist s = random_twist(rng, 0.01, 0.02);
  std::vector<PixelObservation> obs;
  std::uniform_real_distribution<double> junk_mag(20.0, 60.0), junk_dir(0.0, 2.0 * std::numbers::pi);
  for (const Vec3& X : random_points(rng, 80)) {
    PixelObservation o{f * X.head<2>() / X.z(), Vec2::Zero(), X.z()};
    o.u = predict_pixel_flow(o, f, s);
    obs.push_back(o);
  }
  for (std::size_t i = 50; i < obs.size(); ++i) {
    const double a = junk_dir(rng);
    obs[i].u += junk_mag(rng) * Vec2(std::cos(a), std::sin(a));
  }
  const auto r = ransac_pixel(obs, f, RansacParams{}, 3);
  CHECK(relative_error(r.twist, s) < 1e-6);
  CHECK(r.inliers.size() >= 48);
}

TEST_CASE("parameter validation") {
  RansacParams p;
  p.Q = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.n_s = 2;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.gamma0 = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
}
