#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <opencv2/core.hpp>

#include "smfvo/camera.hpp"
#include "smfvo/motion_field.hpp"
#include "smfvo/pipeline.hpp"

namespace smfvo {

/// Axis-aligned box room centred at the world origin whose six inner faces
/// carry band-limited value noise (wavelengths 8 cm to 128 cm).
class TexturedRoom {
 public:
  TexturedRoom(std::uint64_t seed, const Vec3& half_extent = Vec3(5.0, 2.5, 5.0));

  const Vec3& half_extent() const { return half_; }
  /// Intensity in [0, 1] seen along a world ray from a camera centre; 0.5
  /// when the ray misses every face.
  float shade(const Vec3& origin, const Vec3& dir) const;

 private:
  struct Face {
    int cols = 0, rows = 0;
    std::vector<float> texels;
    float at(double u, double v) const;  // u, v in texels
  };

  Vec3 half_;
  std::array<Face, 6> faces_;  // -x, +x, -y, +y, -z, +z
};

/// Per-camera renderer with a cached pixel-ray table.
class RoomRenderer {
 public:
  RoomRenderer(std::shared_ptr<const TexturedRoom> room, const CameraIntrinsics& K);
  /// camera_to_world places the rendering camera.
  cv::Mat render(const Pose& camera_to_world) const;

 private:
  std::shared_ptr<const TexturedRoom> room_;
  CameraIntrinsics K_;
  std::vector<Vec3> rays_;  // row-major, NaN for pixels outside the model
};

struct SyntheticScene {
  std::vector<Vec3> points;  // world frame
  std::vector<Pose> poses;   // left camera-to-world per frame
  std::vector<Twist> twists;  // twists[k] carries frame k to frame k + 1
  StereoRig rig;
  std::shared_ptr<const TexturedRoom> room;

  std::size_t frame_count() const { return poses.size(); }
};

enum class FlowMode { Instantaneous, Finite };
enum class StereoSide { Left, Right };

/// 640x480 pinhole pair, fx = fy = 400, 0.12 m baseline along +x.
StereoRig default_pinhole_rig();
/// 640x480 equidistant pair, fx = fy = 300 (about 122 degrees horizontal).
StereoRig default_fisheye_rig();

/// Poses k = 0..frames-1 with pose[k + 1] = integrate_twist(pose[k], s).
std::vector<Pose> constant_twist_trajectory(const Pose& start, const Twist& s, int frames);

/// Start pose that centres the planar circle traced by a constant twist on the
/// world origin (identity orientation); the origin itself for pure translation.
Pose circle_start(const Twist& s);

/// Direction uniform on the sphere, magnitude uniform in [0, max].
Twist random_twist(std::mt19937_64& rng, double max_omega, double max_v);

/// n points drawn from the [-5, 5]^3 box shifted 5.5 m along +z in the first
/// camera, keeping those at 0.5..20 m Euclidean depth.
std::vector<Vec3> random_points(std::mt19937_64& rng, int n);

/// Point scene with constant twist; no image size limits unless the rig sets
/// them.
SyntheticScene make_point_scene(std::uint64_t seed, int n_points, const Twist& s, int frames,
                                const StereoRig& rig = {});

/// Textured-room scene with a circle-centred constant-twist trajectory.
SyntheticScene make_room_scene(std::uint64_t seed, const Twist& s, int frames, const StereoRig& rig);

/// Ray observations of frame k anchored in camera k. Instantaneous mode
/// evaluates the linear motion field with twists[k]; finite mode differences
/// the exact rays of frames k and k + 1. Points behind either camera, or
/// outside a sized image, are skipped.
std::vector<RayObservation> exact_observations(const SyntheticScene& scene, std::size_t k,
                                               FlowMode mode);

/// Pixel counterpart on an ideal pinhole of focal length f (principal point
/// at the origin).
std::vector<PixelObservation> exact_pixel_observations(const SyntheticScene& scene, std::size_t k,
                                                       double f, FlowMode mode);

/// Renders one view of a room scene. Builds a renderer per call; use
/// RoomRenderer for sequences.
cv::Mat render_textured_frame(const SyntheticScene& scene, std::size_t k, StereoSide side);

/// Right camera-to-world pose for a left camera-to-world pose.
Pose right_camera_pose(const StereoRig& rig, const Pose& left_to_world);

}  // namespace smfvo
