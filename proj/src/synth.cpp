#include "smfvo/synth.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace smfvo {

namespace {

constexpr double kTexel = 0.01;  // m per texel
constexpr float kMissShade = 0.5f;

struct Octave {
  double wavelength;  // m
  float weight;
};
constexpr std::array<Octave, 5> kOctaves{{{0.08, 0.5f}, {0.16, 1.0f}, {0.32, 1.0f}, {0.64, 0.8f},
                                          {1.28, 0.6f}}};

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// One octave of value noise on a face of w x h metres, sampled at texel
// centres and accumulated into out.
void add_octave(std::mt19937_64& rng, int cols, int rows, const Octave& oct, std::vector<float>& out) {
  const double w = cols * kTexel, h = rows * kTexel;
  const int lx = static_cast<int>(std::ceil(w / oct.wavelength)) + 2;
  const int ly = static_cast<int>(std::ceil(h / oct.wavelength)) + 2;
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::vector<float> lattice(static_cast<std::size_t>(lx * ly));
  for (float& v : lattice) v = uni(rng);
  const auto L = [&](int i, int j) { return lattice[static_cast<std::size_t>(j * lx + i)]; };
  for (int r = 0; r < rows; ++r) {
    const double gy = (r + 0.5) * kTexel / oct.wavelength;
    const int j = static_cast<int>(gy);
    const double ty = quintic(gy - j);
    for (int c = 0; c < cols; ++c) {
      const double gx = (c + 0.5) * kTexel / oct.wavelength;
      const int i = static_cast<int>(gx);
      const double tx = quintic(gx - i);
      const double top = L(i, j) + tx * (L(i + 1, j) - L(i, j));
      const double bot = L(i, j + 1) + tx * (L(i + 1, j + 1) - L(i, j + 1));
      out[static_cast<std::size_t>(r * cols + c)] += oct.weight * static_cast<float>(top + ty * (bot - top));
    }
  }
}

}  // namespace

float TexturedRoom::Face::at(double u, double v) const {
  u = std::clamp(u - 0.5, 0.0, cols - 1.0);
  v = std::clamp(v - 0.5, 0.0, rows - 1.0);
  const int c = std::min(static_cast<int>(u), cols - 2);
  const int r = std::min(static_cast<int>(v), rows - 2);
  const float fu = static_cast<float>(u - c), fv = static_cast<float>(v - r);
  const float* p = texels.data() + r * cols + c;
  const float top = p[0] + fu * (p[1] - p[0]);
  const float bot = p[cols] + fu * (p[cols + 1] - p[cols]);
  return top + fv * (bot - top);
}

TexturedRoom::TexturedRoom(std::uint64_t seed, const Vec3& half_extent) : half_(half_extent) {
  if (!(half_.minCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "room extent must be positive");
  std::mt19937_64 rng(seed);
  float total_weight = 0.0f;
  for (const Octave& o : kOctaves) total_weight += o.weight;
  for (int f = 0; f < 6; ++f) {
    // Face axes: the two world axes other than the normal, in increasing order.
    const int axis = f / 2;
    const int a = axis == 0 ? 1 : 0, b = axis == 2 ? 1 : 2;
    Face& face = faces_[static_cast<std::size_t>(f)];
    face.cols = static_cast<int>(std::ceil(2.0 * half_[a] / kTexel)) + 1;
    face.rows = static_cast<int>(std::ceil(2.0 * half_[b] / kTexel)) + 1;
    face.texels.assign(static_cast<std::size_t>(face.cols * face.rows), 0.0f);
    for (const Octave& o : kOctaves) add_octave(rng, face.cols, face.rows, o, face.texels);
    for (float& t : face.texels) t /= total_weight;
  }
}

float TexturedRoom::shade(const Vec3& origin, const Vec3& dir) const {
  double best = std::numeric_limits<double>::infinity();
  int face = -1;
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) continue;
    const double bound = dir[axis] > 0.0 ? half_[axis] : -half_[axis];
    const double t = (bound - origin[axis]) / dir[axis];
    if (t > 0.0 && t < best) {
      best = t;
      face = 2 * axis + (dir[axis] > 0.0 ? 1 : 0);
    }
  }
  if (face < 0) return kMissShade;
  const Vec3 hit = origin + best * dir;
  const int axis = face / 2;
  const int a = axis == 0 ? 1 : 0, b = axis == 2 ? 1 : 2;
  return faces_[static_cast<std::size_t>(face)].at((hit[a] + half_[a]) / kTexel,
                                                   (hit[b] + half_[b]) / kTexel);
}

RoomRenderer::RoomRenderer(std::shared_ptr<const TexturedRoom> room, const CameraIntrinsics& K)
    : room_(std::move(room)), K_(K) {
  if (!room_) throw Error(ErrorCode::InvalidArgument, "renderer needs a room");
  if (K_.width <= 0 || K_.height <= 0)
    throw Error(ErrorCode::InvalidArgument, "renderer needs an image size");
  rays_.resize(static_cast<std::size_t>(K_.width * K_.height));
  const Vec3 nan = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  for (int y = 0; y < K_.height; ++y)
    for (int x = 0; x < K_.width; ++x)
      rays_[static_cast<std::size_t>(y * K_.width + x)] = try_unproject(K_, Vec2(x, y)).value_or(nan);
}

cv::Mat RoomRenderer::render(const Pose& camera_to_world) const {
  cv::Mat img(K_.height, K_.width, CV_8UC1);
  const Mat3& R = camera_to_world.R;
  for (int y = 0; y < K_.height; ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < K_.width; ++x) {
      const Vec3& r = rays_[static_cast<std::size_t>(y * K_.width + x)];
      const float s = r.allFinite() ? room_->shade(camera_to_world.t, R * r) : 0.0f;
      row[x] = static_cast<std::uint8_t>(std::lround(20.0f + 215.0f * std::clamp(s, 0.0f, 1.0f)));
    }
  }
  return img;
}

StereoRig default_pinhole_rig() {
  StereoRig rig;
  rig.left.model = CameraModel::Pinhole;
  rig.left.fx = rig.left.fy = 400.0;
  rig.left.cx = 319.5;
  rig.left.cy = 239.5;
  rig.left.width = 640;
  rig.left.height = 480;
  rig.right = rig.left;
  rig.t_rl = Vec3(-0.12, 0.0, 0.0);
  return rig;
}

StereoRig default_fisheye_rig() {
  StereoRig rig = default_pinhole_rig();
  rig.left.model = CameraModel::EquidistantFisheye;
  rig.left.fx = rig.left.fy = 300.0;
  rig.right = rig.left;
  return rig;
}

std::vector<Pose> constant_twist_trajectory(const Pose& start, const Twist& s, int frames) {
  if (frames < 1) throw Error(ErrorCode::InvalidArgument, "frames must be >= 1");
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(frames));
  poses.push_back(start);
  for (int k = 1; k < frames; ++k) poses.push_back(integrate_twist(poses.back(), s));
  return poses;
}

Pose circle_start(const Twist& s) {
  const double angle = s.omega.norm();
  if (angle < 1e-9) return Pose::identity();
  // With t_k = c + R^k a the recursion t_{k+1} = t_k + R^k v needs
  // (R - I) a = v in the rotation plane; starting at t_0 = a puts c at 0.
  const Vec3 n = s.omega / angle;
  const Mat3 R = so3_exp(s.omega);
  const Mat3 M = R - Mat3::Identity() + n * n.transpose();
  const Vec3 v_plane = s.v - n * n.dot(s.v);
  return {Mat3::Identity(), M.partialPivLu().solve(v_plane)};
}

Twist random_twist(std::mt19937_64& rng, double max_omega, double max_v) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto draw = [&](double max) {
    Vec3 d(gauss(rng), gauss(rng), gauss(rng));
    return Vec3(d.normalized() * (max * uni(rng)));
  };
  Twist s;
  s.omega = draw(max_omega);
  s.v = draw(max_v);
  return s;
}

std::vector<Vec3> random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> uni(-5.0, 5.0);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(pts.size()) < n) {
    const Vec3 P(uni(rng), uni(rng), uni(rng) + 5.5);
    const double d = P.norm();
    if (P.z() > 0.0 && d >= 0.5 && d <= 20.0) pts.push_back(P);
  }
  return pts;
}

SyntheticScene make_point_scene(std::uint64_t seed, int n_points, const Twist& s, int frames,
                                const StereoRig& rig) {
  std::mt19937_64 rng(seed);
  SyntheticScene scene;
  scene.points = random_points(rng, n_points);
  scene.poses = constant_twist_trajectory(Pose::identity(), s, frames);
  scene.twists.assign(static_cast<std::size_t>(std::max(frames - 1, 0)), s);
  scene.rig = rig;
  return scene;
}

SyntheticScene make_room_scene(std::uint64_t seed, const Twist& s, int frames, const StereoRig& rig) {
  SyntheticScene scene;
  scene.poses = constant_twist_trajectory(circle_start(s), s, frames);
  scene.twists.assign(static_cast<std::size_t>(std::max(frames - 1, 0)), s);
  scene.rig = rig;
  scene.room = std::make_shared<TexturedRoom>(seed);
  return scene;
}

namespace {

bool visible(const CameraIntrinsics& K, const Vec3& P) {
  if (!(P.z() > 0.0)) return false;
  if (K.width <= 0 || K.height <= 0) return true;
  const auto px = try_project(K, P);
  return px && in_image(K, *px);
}

void check_frame(const SyntheticScene& scene, std::size_t k, FlowMode mode) {
  if (k >= scene.poses.size()) throw Error(ErrorCode::InvalidArgument, "frame index out of range");
  if (mode == FlowMode::Finite && k + 1 >= scene.poses.size())
    throw Error(ErrorCode::InvalidArgument, "finite flow needs frame k + 1");
  if (mode == FlowMode::Instantaneous && k >= scene.twists.size())
    throw Error(ErrorCode::InvalidArgument, "no twist for frame k");
}

}  // namespace

std::vector<RayObservation> exact_observations(const SyntheticScene& scene, std::size_t k,
                                               FlowMode mode) {
  check_frame(scene, k, mode);
  const CameraIntrinsics& K = scene.rig.left;
  std::vector<RayObservation> out;
  out.reserve(scene.points.size());
  for (const Vec3& X : scene.points) {
    const Vec3 P = scene.poses[k].inverse_transform(X);
    if (!visible(K, P)) continue;
    const double d = P.norm();
    const Vec3 r = P / d;
    if (mode == FlowMode::Instantaneous) {
      out.push_back({r, predict_ray_flow(r, d, scene.twists[k]), d, P});
    } else {
      const Vec3 P1 = scene.poses[k + 1].inverse_transform(X);
      if (!visible(K, P1)) continue;
      out.push_back({r, P1.normalized() - r, d, P});
    }
  }
  return out;
}

std::vector<PixelObservation> exact_pixel_observations(const SyntheticScene& scene, std::size_t k,
                                                       double f, FlowMode mode) {
  check_frame(scene, k, mode);
  const CameraIntrinsics& K = scene.rig.left;
  std::vector<PixelObservation> out;
  out.reserve(scene.points.size());
  for (const Vec3& X : scene.points) {
    const Vec3 P = scene.poses[k].inverse_transform(X);
    if (!visible(K, P)) continue;
    PixelObservation o;
    o.p = f * P.head<2>() / P.z();
    o.Z = P.z();
    if (mode == FlowMode::Instantaneous) {
      o.u = predict_pixel_flow(o, f, scene.twists[k]);
    } else {
      const Vec3 P1 = scene.poses[k + 1].inverse_transform(X);
      if (!visible(K, P1)) continue;
      o.u = f * P1.head<2>() / P1.z() - o.p;
    }
    out.push_back(o);
  }
  return out;
}

Pose right_camera_pose(const StereoRig& rig, const Pose& left_to_world) {
  const Pose right_to_left{rig.R_rl.transpose(), -(rig.R_rl.transpose() * rig.t_rl)};
  return left_to_world * right_to_left;
}

cv::Mat render_textured_frame(const SyntheticScene& scene, std::size_t k, StereoSide side) {
  if (!scene.room) throw Error(ErrorCode::InvalidArgument, "scene has no texture");
  if (k >= scene.poses.size()) throw Error(ErrorCode::InvalidArgument, "frame index out of range");
  if (side == StereoSide::Left) return RoomRenderer(scene.room, scene.rig.left).render(scene.poses[k]);
  return RoomRenderer(scene.room, scene.rig.right).render(right_camera_pose(scene.rig, scene.poses[k]));
}

}  // namespace smfvo
