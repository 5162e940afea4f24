#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include <opencv2/imgproc.hpp>

#include "smfvo/synth.hpp"
#include "smfvo/tracking.hpp"

using namespace smfvo;

namespace {

cv::Mat checkerboard(int w, int h, int square, int offset) {
  cv::Mat img(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int a = (x + square - offset) / square, b = (y + square - offset) / square;
      img.at<std::uint8_t>(y, x) = ((a + b) % 2) ? 220 : 35;
    }
  return img;
}

// Distance along a world ray from inside the box to its wall.
double box_distance(const Vec3& origin, const Vec3& dir, const Vec3& half) {
  double t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0) t = std::min(t, (half[a] - origin[a]) / dir[a]);
    if (dir[a] < 0) t = std::min(t, (-half[a] - origin[a]) / dir[a]);
  }
  return t;
}

std::vector<Feature> as_features(const std::vector<Vec2>& px) {
  std::vector<Feature> out;
  for (std::size_t i = 0; i < px.size(); ++i) out.push_back({i, px[i], 0});
  return out;
}

}  // namespace

TEST_CASE("checkerboard yields one corner per grid cell") {
  TrackingParams p;
  p.target_count = 1000;
  // Square edges at 16 + 32k put exactly one corner at the centre of each cell.
  const cv::Mat img = checkerboard(640, 480, 32, 16);
  const auto pts = detect_features(img, {}, p);
  CHECK(pts.size() == (640 / 32) * (480 / 32));
  std::vector<int> per_cell((640 / 32) * (480 / 32), 0);
  for (const Vec2& q : pts) {
    // Nearest true corner is at 16 + 32k (the edge between pixels 15 and 16).
    // A hard-edged corner gives a score plateau a few pixels wide.
    const double ex = 15.5 + 32.0 * std::round((q.x() - 15.5) / 32.0);
    const double ey = 15.5 + 32.0 * std::round((q.y() - 15.5) / 32.0);
    CHECK(std::abs(q.x() - ex) <= 2.0);
    CHECK(std::abs(q.y() - ey) <= 2.0);
    ++per_cell[static_cast<std::size_t>(static_cast<int>(q.y()) / 32 * 20 + static_cast<int>(q.x()) / 32)];
  }
  CHECK(std::all_of(per_cell.begin(), per_cell.end(), [](int n) { return n == 1; }));
}

TEST_CASE("detector respects budget, occupancy and flat images") {
  TrackingParams p;
  const cv::Mat flat(480, 640, CV_8UC1, cv::Scalar(128));
  CHECK(detect_features(flat, {}, p).empty());

  const cv::Mat img = checkerboard(640, 480, 32, 16);
  std::vector<Vec2> everywhere;
  for (int y = 0; y < 480; y += 32)
    for (int x = 0; x < 640; x += 32) everywhere.emplace_back(x + 16, y + 16);
  p.target_count = 1000;
  CHECK(detect_features(img, everywhere, p).empty());

  p.target_count = 50;
  CHECK(detect_features(img, {}, p).size() == 50);

  // New corners keep a full cell from existing features.
  p.target_count = 1000;
  const std::vector<Vec2> one = {Vec2(320, 240)};
  for (const Vec2& q : detect_features(img, one, p)) CHECK((q - one[0]).norm() >= 32.0);
}

TEST_CASE("identical images give zero flow") {
  const auto scene = make_room_scene(3, Twist::zero(), 1, default_pinhole_rig());
  const cv::Mat img = render_textured_frame(scene, 0, StereoSide::Left);
  TrackingParams p;
  const ImagePyramid a(img, p), b(img, p);
  const auto feats = as_features(detect_features(img, {}, p));
  REQUIRE(feats.size() > 100);
  int tracked = 0;
  for (const auto& t : track_klt(a, b, feats, p)) {
    if (t.status != TrackStatus::Tracked) continue;
    ++tracked;
    CHECK((t.px_cur - t.px_prev).norm() < 1e-3);
    CHECK(t.age == 1);
  }
  CHECK(tracked == static_cast<int>(feats.size()));
}

TEST_CASE("KLT recovers a (3, 2) px shift") {
  const StereoRig rig = default_pinhole_rig();
  auto room = std::make_shared<TexturedRoom>(11);
  CameraIntrinsics shifted = rig.left;
  shifted.cx += 3.0;
  shifted.cy += 2.0;
  const Pose pose = Pose::identity();
  const cv::Mat img0 = RoomRenderer(room, rig.left).render(pose);
  const cv::Mat img1 = RoomRenderer(room, shifted).render(pose);

  TrackingParams p;
  const ImagePyramid a(img0, p), b(img1, p);
  std::vector<Vec2> px;
  for (const Vec2& q : detect_features(img0, {}, p))
    if (in_image(rig.left, q, 20.0)) px.push_back(q);
  REQUIRE(px.size() > 100);
  int good = 0;
  for (const auto& t : track_klt(a, b, as_features(px), p))
    if (t.status == TrackStatus::Tracked && (t.px_cur - t.px_prev - Vec2(3.0, 2.0)).norm() < 0.1) ++good;
  CHECK(good >= static_cast<int>(std::ceil(0.95 * static_cast<double>(px.size()))));
}

TEST_CASE("tracks pushed past the border are out of bounds") {
  const StereoRig rig = default_pinhole_rig();
  auto room = std::make_shared<TexturedRoom>(12);
  CameraIntrinsics shifted = rig.left;
  shifted.cx -= 6.0;
  const cv::Mat img0 = RoomRenderer(room, rig.left).render(Pose::identity());
  const cv::Mat img1 = RoomRenderer(room, shifted).render(Pose::identity());
  TrackingParams p;
  const ImagePyramid a(img0, p), b(img1, p);
  // Half window is 10 px; x = 14 lands at 8 after the shift.
  const auto t = track_klt(a, b, as_features({Vec2(14.0, 240.0), Vec2(320.0, 240.0)}), p);
  CHECK(t[0].status == TrackStatus::OutOfBounds);
  CHECK(t[1].id == 1);
}

TEST_CASE("rectified stereo closed form") {
  StereoRig rig;
  rig.left.fx = rig.left.fy = 100.0;
  rig.left.cx = 320.0;
  rig.left.cy = 240.0;
  rig.right = rig.left;
  rig.t_rl = Vec3(-0.1, 0.0, 0.0);
  TrackingParams p;
  // Z = f b / disparity = 100 * 0.1 / 10.
  const auto P = triangulate_stereo(rig, Vec2(320, 240), Vec2(310, 240), p);
  REQUIRE(P.has_value());
  CHECK((*P - Vec3(0, 0, 1.0)).norm() < 1e-12);
  CHECK(P->norm() == doctest::Approx(1.0).epsilon(1e-12));

  const auto Q = triangulate_stereo(rig, Vec2(370, 200), Vec2(365, 200), p);
  REQUIRE(Q.has_value());
  CHECK(Q->z() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(Q->x() == doctest::Approx(2.0 * 50.0 / 100.0).epsilon(1e-12));

  CHECK_FALSE(triangulate_stereo(rig, Vec2(320, 240), Vec2(320, 240), p).has_value());
  CHECK_FALSE(triangulate_stereo(rig, Vec2(320, 240), Vec2(330, 240), p).has_value());
}

TEST_CASE("stereo depth on a rendered pair") {
  const StereoRig rig = default_pinhole_rig();
  const auto scene = make_room_scene(5, Twist::zero(), 1, rig);
  const cv::Mat left = render_textured_frame(scene, 0, StereoSide::Left);
  const cv::Mat right = render_textured_frame(scene, 0, StereoSide::Right);
  TrackingParams p;
  const ImagePyramid lp(left, p), rp(right, p);
  const auto px = detect_features(left, {}, p);
  const auto matches = stereo_depth(rig, lp, rp, px, p);
  REQUIRE(matches.size() == px.size());
  std::vector<double> rel;
  const Pose& pose = scene.poses[0];
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (!matches[i].valid) continue;
    const StereoMatch& m = matches[i];
    CHECK((project(rig.left, m.P) - px[i]).norm() <= 1.0);
    CHECK((project(rig.right, rig.R_rl * m.P + rig.t_rl) - m.px_right).norm() <= 1.0);
    CHECK(m.d == doctest::Approx(m.P.norm()));
    const Vec3 ray = unproject(rig.left, px[i]);
    const double truth = box_distance(pose.t, pose.R * ray, scene.room->half_extent());
    rel.push_back(std::abs(m.d - truth) / truth);
  }
  REQUIRE(rel.size() > px.size() * 8 / 10);
  std::nth_element(rel.begin(), rel.begin() + static_cast<long>(rel.size() / 2), rel.end());
  CHECK(rel[rel.size() / 2] < 0.01);
}

TEST_CASE("tracking parameter validation") {
  TrackingParams p;
  p.window = 20;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.replenish_ratio = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(ImagePyramid(cv::Mat(), TrackingParams{}), Error);
}
