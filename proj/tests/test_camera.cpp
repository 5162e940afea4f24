#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "smfvo/camera.hpp"

using namespace smfvo;

namespace {

CameraIntrinsics pinhole(double f, double cx, double cy, int w = 0, int h = 0) {
  CameraIntrinsics K;
  K.fx = K.fy = f;
  K.cx = cx;
  K.cy = cy;
  K.width = w;
  K.height = h;
  return K;
}

CameraIntrinsics radtan() {
  CameraIntrinsics K = pinhole(458.654, 367.215, 248.375, 752, 480);
  K.model = CameraModel::PinholeRadTan;
  K.fy = 457.296;
  K.dist = {-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05};
  return K;
}

CameraIntrinsics fisheye() {
  CameraIntrinsics K = pinhole(190.97, 254.93, 256.89, 512, 512);
  K.model = CameraModel::EquidistantFisheye;
  K.fy = 190.97;
  K.dist = {0.0034823894, 0.00071503, -0.0020532361, 0.00020293};
  return K;
}

}  // namespace

TEST_CASE("pinhole projection examples") {
  const auto K0 = pinhole(100, 0, 0);
  const Vec2 a = project(K0, Vec3(0, 0, 5));
  CHECK(a.x() == doctest::Approx(0.0));
  CHECK(a.y() == doctest::Approx(0.0));

  const auto K = pinhole(100, 320, 240);
  const Vec2 b = project(K, Vec3(1, 0, 1));
  CHECK(b.x() == doctest::Approx(420.0));
  CHECK(b.y() == doctest::Approx(240.0));

  const Vec3 r = unproject(K, Vec2(420, 240));
  CHECK((r - Vec3(1, 0, 1).normalized()).norm() < 1e-12);
}

TEST_CASE("equidistant fisheye radius at 60 degrees") {
  CameraIntrinsics K = pinhole(150, 0, 0);
  K.model = CameraModel::EquidistantFisheye;
  const double theta = std::numbers::pi / 3.0;
  const Vec3 P(std::sin(theta), 0.0, std::cos(theta));
  CHECK(project(K, P).norm() == doctest::Approx(150.0 * theta).epsilon(1e-12));
  CHECK(project(K, 3.0 * P).norm() == doctest::Approx(150.0 * theta).epsilon(1e-12));
}

TEST_CASE("principal point unprojects to the optical axis for every model") {
  for (const auto& K : {pinhole(400, 319.5, 239.5, 640, 480), radtan(), fisheye()}) {
    const Vec3 r = unproject(K, Vec2(K.cx, K.cy));
    CHECK((r - Vec3::UnitZ()).norm() < 1e-12);
  }
}

TEST_CASE("points behind the camera are rejected") {
  const auto K = pinhole(100, 320, 240);
  CHECK_THROWS_AS(project(K, Vec3(0, 0, -1)), Error);
  CHECK_FALSE(try_project(K, Vec3(0.1, 0, 0)).has_value());
  CameraIntrinsics F = fisheye();
  CHECK_FALSE(try_project(F, Vec3(1, 0, -0.1)).has_value());
  try {
    project(K, Vec3(0, 0, -1));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PointBehindCamera);
  }
}

TEST_CASE("pixel round trip under 1e-6 px on 1000 samples per model") {
  std::mt19937_64 rng(3);
  for (const auto& K : {pinhole(400, 319.5, 239.5, 640, 480), radtan(), fisheye()}) {
    std::uniform_real_distribution<double> ux(0.0, K.width - 1.0), uy(0.0, K.height - 1.0);
    double worst = 0.0, worst_norm = 0.0;
    int tried = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec2 px(ux(rng), uy(rng));
      const auto r = try_unproject(K, px);
      if (!r) continue;
      ++tried;
      worst = std::max(worst, (project(K, *r) - px).norm());
      worst_norm = std::max(worst_norm, std::abs(r->norm() - 1.0));
    }
    CAPTURE(to_string(K.model));
    // The fisheye corners lie beyond 90 degrees and have no ray.
    CHECK(tried > (K.model == CameraModel::EquidistantFisheye ? 800 : 950));
    CHECK(worst < 1e-6);
    CHECK(worst_norm < 1e-12);
  }
}

TEST_CASE("ray round trip stays on the ray") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  const auto check_model = [&](const CameraIntrinsics& K, double max_theta) {
    std::uniform_real_distribution<double> th(0.0, max_theta);
    for (int i = 0; i < 500; ++i) {
      const double t = th(rng), a = ang(rng);
      const Vec3 r(std::sin(t) * std::cos(a), std::sin(t) * std::sin(a), std::cos(t));
      const Vec3 back = unproject(K, project(K, r));
      CHECK(back.dot(r) > 1.0 - 1e-12);
    }
  };
  check_model(pinhole(400, 319.5, 239.5), 0.6);
  check_model(radtan(), 0.5);
  check_model(fisheye(), 1.4);
}

TEST_CASE("fisheye and pinhole agree near the axis") {
  CameraIntrinsics P = pinhole(300, 320, 240);
  CameraIntrinsics F = P;
  F.model = CameraModel::EquidistantFisheye;
  // 1 degree at f = 300 is about 5.2 px.
  for (const Vec2& off : {Vec2(5, 0), Vec2(0, -5), Vec2(3, 3.5)}) {
    const Vec2 px = Vec2(P.cx, P.cy) + off;
    const Vec3 a = unproject(P, px), b = unproject(F, px);
    CHECK((a - b).norm() / a.norm() < 1e-3);
  }
}

TEST_CASE("intrinsics and rig validation") {
  CameraIntrinsics K = pinhole(-1, 0, 0);
  CHECK_THROWS_AS(K.validate(), Error);
  K = pinhole(100, 700, 240, 640, 480);
  CHECK_THROWS_AS(K.validate(), Error);
  StereoRig rig;
  rig.left = rig.right = pinhole(100, 320, 240, 640, 480);
  CHECK_THROWS_AS(rig.validate(), Error);  // zero baseline
  rig.t_rl = Vec3(-0.1, 0, 0);
  CHECK_NOTHROW(rig.validate());
  CHECK((rig.right_center_in_left() - Vec3(0.1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("fisheye pixels beyond 90 degrees have no ray") {
  const CameraIntrinsics K = fisheye();
  CHECK_FALSE(try_unproject(K, Vec2(0.0, 0.0)).has_value());
  CHECK_THROWS_AS(unproject(K, Vec2(0.0, 0.0)), Error);
  CHECK(try_unproject(K, Vec2(K.cx + 250.0, K.cy)).has_value());
}

TEST_CASE("model names round trip") {
  for (auto m : {CameraModel::Pinhole, CameraModel::PinholeRadTan, CameraModel::EquidistantFisheye})
    CHECK(camera_model_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(camera_model_from_string("orthographic"), Error);
}
