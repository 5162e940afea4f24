#include <doctest.h>

#include <random>

#include "smfvo/synth.hpp"
#include "support.hpp"

using namespace smfvo;

TEST_CASE("scenes are deterministic in the seed") {
  const Twist s{Vec3(0.01, 0.02, 0), Vec3(0.05, 0, 0.1)};
  const auto a = make_point_scene(4, 100, s, 5);
  const auto b = make_point_scene(4, 100, s, 5);
  const auto c = make_point_scene(5, 100, s, 5);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);
  CHECK(a.points.front() != c.points.front());

  const auto ra = make_room_scene(4, s, 2, default_pinhole_rig());
  const auto rb = make_room_scene(4, s, 2, default_pinhole_rig());
  const cv::Mat ia = render_textured_frame(ra, 1, StereoSide::Right);
  const cv::Mat ib = render_textured_frame(rb, 1, StereoSide::Right);
  CHECK(cv::norm(ia, ib, cv::NORM_INF) == 0.0);
}

TEST_CASE("random points respect the depth window") {
  std::mt19937_64 rng(41);
  for (const Vec3& P : random_points(rng, 2000)) {
    CHECK(P.norm() >= 0.5);
    CHECK(P.norm() <= 20.0);
    CHECK(P.z() > 0.0);
  }
}

TEST_CASE("random twists respect their bounds") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Twist s = random_twist(rng, 0.05, 0.2);
    CHECK(s.omega.norm() <= 0.05 + 1e-15);
    CHECK(s.v.norm() <= 0.2 + 1e-15);
  }
}

TEST_CASE("constant twist trajectory and circle centring") {
  const Twist s{Vec3(0, 0.0126, 0), Vec3(0, 0, 0.02)};
  const Pose start = circle_start(s);
  const auto poses = constant_twist_trajectory(start, s, 500);
  REQUIRE(poses.size() == 500);
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const Pose next = integrate_twist(poses[k - 1], s);
    CHECK((next.t - poses[k].t).norm() < 1e-12);
  }
  // A constant planar twist traces a circle; the start pose centres it.
  const double radius = s.v.norm() / (2.0 * std::sin(s.omega.norm() / 2.0));
  for (const Pose& p : poses) CHECK(p.t.norm() == doctest::Approx(radius).epsilon(1e-9));
  CHECK(circle_start({Vec3::Zero(), Vec3(0, 0, 1)}).t.norm() == 0.0);
}

TEST_CASE("exact observations") {
  const Twist s{Vec3(0.01, -0.02, 0.005), Vec3(0.03, 0.01, 0.1)};
  StereoRig rig = default_pinhole_rig();
  const auto scene = make_point_scene(6, 300, s, 3, rig);

  SUBCASE("instantaneous flows follow the linear motion field") {
    const auto obs = exact_observations(scene, 0, FlowMode::Instantaneous);
    REQUIRE(!obs.empty());
    for (const auto& o : obs) {
      CHECK((o.rdot - test::ray_flow_oracle(o.P, s)).norm() < 1e-14);
      CHECK((o.P - o.d * o.r).norm() < 1e-12);
      CHECK(in_image(rig.left, project(rig.left, o.P)));
    }
  }
  SUBCASE("finite flows land on the next frame's ray") {
    const auto obs = exact_observations(scene, 1, FlowMode::Finite);
    for (const auto& o : obs) {
      const Vec3 cur = so3_exp(s.omega).transpose() * (o.P - s.v);
      CHECK(((o.r + o.rdot) - cur.normalized()).norm() < 1e-12);
      CHECK(in_image(rig.left, project(rig.left, cur)));
    }
  }
  SUBCASE("pixel observations on an ideal pinhole") {
    const double f = 400.0;
    const auto pix = exact_pixel_observations(scene, 0, f, FlowMode::Instantaneous);
    REQUIRE(!pix.empty());
    for (const auto& o : pix) CHECK((predict_pixel_flow(o, f, s) - o.u).norm() < 1e-9);
  }
}

TEST_CASE("right camera pose follows the rig extrinsic") {
  const StereoRig rig = default_pinhole_rig();
  const Pose left{so3_exp(Vec3(0.1, 0.2, 0.3)), Vec3(1, 2, 3)};
  const Pose right = right_camera_pose(rig, left);
  const Vec3 Xw(0.3, -0.2, 4.0);
  const Vec3 X_left = left.inverse_transform(Xw);
  CHECK((right.inverse_transform(Xw) - (rig.R_rl * X_left + rig.t_rl)).norm() < 1e-12);
}

TEST_CASE("rendered frames are textured") {
  const auto scene = make_room_scene(1, Twist::zero(), 1, default_fisheye_rig());
  const cv::Mat img = render_textured_frame(scene, 0, StereoSide::Left);
  CHECK(img.type() == CV_8UC1);
  CHECK(img.cols == 640);
  CHECK(img.rows == 480);
  cv::Scalar mean, stddev;
  cv::meanStdDev(img, mean, stddev);
  CHECK(stddev[0] > 10.0);
}
