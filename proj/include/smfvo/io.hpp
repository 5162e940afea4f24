#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "smfvo/camera.hpp"
#include "smfvo/pipeline.hpp"
#include "smfvo/synth.hpp"

namespace smfvo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

/// Applies one `section.key = value` setting. Throws ParseError for unknown
/// keys or malformed values.
void apply_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

/// Reads a flat `section.key = value` file ('#' starts a comment) on top of
/// the defaults and validates the result.
PipelineConfig load_config(const fs::path& path);
PipelineConfig parse_config(const std::string& text);

/// Every key with its current value, one per line, in a form parse_config
/// accepts.
std::string format_config(const PipelineConfig& config);

// ----------------------------------------------------------- calibration

/// Keys: cam0.model, cam0.fx, cam0.fy, cam0.cx, cam0.cy, cam0.dist (up to four
/// numbers), cam0.width, cam0.height, the same for cam1, stereo.R_rl (nine
/// numbers, row-major) and stereo.t_rl (three numbers, metres).
StereoRig load_calibration(const fs::path& path);
StereoRig parse_calibration(const std::string& text);
std::string format_calibration(const StereoRig& rig);

// ------------------------------------------------------------ trajectory

/// "timestamp tx ty tz qx qy qz qw" with the timestamp at nine decimals and
/// every other number in shortest round-trip form.
std::string format_pose_line(double timestamp, const Pose& pose);
void write_trajectory(const Trajectory& traj, const fs::path& path);
/// Blank lines and '#' comments are skipped. Throws ParseError naming the
/// offending line, including non-increasing timestamps.
Trajectory read_trajectory(const fs::path& path);
Trajectory parse_trajectory(const std::string& text);

// ------------------------------------------------------------------- ATE

enum class Alignment { FirstFrame, Similarity };

Alignment alignment_from_string(const std::string& name);

inline constexpr double kAssociationGate = 0.010;  // s

/// Pairs each estimated pose with the nearest ground-truth timestamp within
/// the gate, aligns, and returns the translational RMSE. FirstFrame moves the
/// estimate rigidly so its first associated pose equals the ground truth;
/// Similarity is the least-squares rigid fit at unit scale. Throws NoOverlap
/// when fewer than two poses associate.
double ate_rmse(const Trajectory& est, const Trajectory& gt, Alignment align);

// --------------------------------------------------------------- dataset

enum class DatasetFormat { Euroc, Synth };

DatasetFormat dataset_format_from_string(const std::string& name);

struct StereoFrame {
  double timestamp = 0.0;  // s
  fs::path left;
  fs::path right;
};

inline constexpr std::int64_t kStereoPairingGateNs = 1'000'000;

class DatasetReader {
 public:
  const fs::path& root() const { return root_; }
  const StereoRig& rig() const { return rig_; }
  std::size_t size() const { return frames_.size(); }
  const StereoFrame& frame(std::size_t i) const { return frames_.at(i); }
  const std::optional<Trajectory>& ground_truth() const { return ground_truth_; }

  /// Loads both images of frame i as 8-bit grayscale. Throws Io.
  std::pair<cv::Mat, cv::Mat> load(std::size_t i) const;

 private:
  friend DatasetReader load_dataset(const fs::path& path, DatasetFormat format);

  fs::path root_;
  StereoRig rig_;
  std::vector<StereoFrame> frames_;
  std::optional<Trajectory> ground_truth_;
};

/// EuRoC-style layout, at `path` or `path/mav0`: cam0/data.csv and
/// cam0/data/*.png, cam1 likewise, calib.txt, and optionally groundtruth.txt
/// (trajectory format, left camera). Frames are sorted and deduplicated by
/// timestamp; left/right pair within 1 ms. Throws MissingCalibration,
/// EmptySequence, or UnpairableStreams.
DatasetReader load_dataset(const fs::path& path, DatasetFormat format);

/// Writes a rendered room scene in the layout load_dataset reads, with
/// ground truth for the left camera. Frame k is stamped k * period seconds.
void write_synth_dataset(const SyntheticScene& scene, const fs::path& dir, double period = 0.05);

// ----------------------------------------------------------------- stats

inline constexpr const char* kStatsHeader =
    "timestamp,track_us,depth_us,ransac_us,opt_us,total_us,features,inliers,keyframe";

class StatsWriter {
 public:
  explicit StatsWriter(const fs::path& path);
  void write(const FrameResult& r);

 private:
  std::ofstream out_;
};

std::string format_stats_row(const FrameResult& r);

}  // namespace smfvo
