#include "smfvo/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <Eigen/Geometry>
#include <opencv2/imgcodecs.hpp>

namespace smfvo {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const char* end = s.data() + s.size();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) return std::nullopt;
  return v;
}

[[noreturn]] void parse_error(const std::string& what, int line = 0) {
  throw Error(ErrorCode::ParseError, line > 0 ? "line " + std::to_string(line) + ": " + what : what);
}

template <typename T>
T number_or_throw(const std::string& s, const std::string& key) {
  if (auto v = parse_number<T>(s)) return *v;
  parse_error("bad value '" + s + "' for " + key);
}

bool bool_or_throw(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  parse_error("bad boolean '" + s + "' for " + key);
}

// Shortest representation that parses back to the same double.
std::string shortest(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Parses `key = value` lines; '#' starts a comment. Calls fn(key, value, line).
void for_each_setting(const std::string& text,
                      const std::function<void(const std::string&, const std::string&, int)>& fn) {
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) parse_error("expected 'key = value'", line_no);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) parse_error("empty key", line_no);
    try {
      fn(key, value, line_no);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError) throw;
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      parse_error(msg, line_no);
    }
  }
}

struct ConfigField {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T, typename Ref>
ConfigField plain(Ref ref) {
  ConfigField f;
  f.set = [ref](PipelineConfig& c, const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>)
      ref(c) = bool_or_throw(v, key);
    else
      ref(c) = number_or_throw<T>(v, key);
  };
  f.get = [ref](const PipelineConfig& c) {
    const T value = ref(const_cast<PipelineConfig&>(c));
    if constexpr (std::is_same_v<T, bool>)
      return std::string(value ? "true" : "false");
    else if constexpr (std::is_floating_point_v<T>)
      return shortest(value);
    else
      return std::to_string(value);
  };
  return f;
}

template <typename Ref>
ConfigField degrees(Ref ref) {
  ConfigField f;
  f.set = [ref](PipelineConfig& c, const std::string& key, const std::string& v) {
    ref(c) = deg2rad(number_or_throw<double>(v, key));
  };
  f.get = [ref](const PipelineConfig& c) { return shortest(rad2deg(ref(const_cast<PipelineConfig&>(c)))); };
  return f;
}

#define SMFVO_FIELD(type, expr) plain<type>([](PipelineConfig& c) -> auto& { return c.expr; })
#define SMFVO_DEGREES(expr) degrees([](PipelineConfig& c) -> double& { return c.expr; })

const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = [] {
    std::vector<std::pair<std::string, ConfigField>> f;
    ConfigField mode;
    mode.set = [](PipelineConfig& c, const std::string&, const std::string& v) {
      c.mode = estimation_mode_from_string(v);
    };
    mode.get = [](const PipelineConfig& c) { return std::string(to_string(c.mode)); };
    f.emplace_back("pipeline.mode", mode);
    f.emplace_back("pipeline.optimize", SMFVO_FIELD(bool, optimize));
    f.emplace_back("pipeline.seed", SMFVO_FIELD(std::uint64_t, seed));
    f.emplace_back("pipeline.max_keyframes", SMFVO_FIELD(int, max_keyframes));
    f.emplace_back("pipeline.stereo_residuals", SMFVO_FIELD(bool, stereo_residuals));

    f.emplace_back("ransac.Q", SMFVO_FIELD(double, ransac.Q));
    f.emplace_back("ransac.n_s", SMFVO_FIELD(int, ransac.n_s));
    f.emplace_back("ransac.N_max", SMFVO_FIELD(int, ransac.N_max));
    f.emplace_back("ransac.gamma0", SMFVO_FIELD(double, ransac.gamma0));
    f.emplace_back("ransac.tau_pi_deg", SMFVO_DEGREES(ransac.tau_pi));
    f.emplace_back("ransac.tau_theta_deg", SMFVO_DEGREES(ransac.tau_theta));
    f.emplace_back("ransac.textbook_adaptation", SMFVO_FIELD(bool, ransac.textbook_adaptation));
    ConfigField tau_u;
    tau_u.set = [](PipelineConfig& c, const std::string& key, const std::string& v) {
      if (v == "auto")
        c.ransac.tau_u_override.reset();
      else
        c.ransac.tau_u_override = number_or_throw<double>(v, key);
    };
    tau_u.get = [](const PipelineConfig& c) {
      return c.ransac.tau_u_override ? shortest(*c.ransac.tau_u_override) : std::string("auto");
    };
    f.emplace_back("ransac.tau_u", tau_u);

    f.emplace_back("tracking.cell_size", SMFVO_FIELD(int, tracking.cell_size));
    f.emplace_back("tracking.target_count", SMFVO_FIELD(int, tracking.target_count));
    f.emplace_back("tracking.replenish_ratio", SMFVO_FIELD(double, tracking.replenish_ratio));
    f.emplace_back("tracking.min_score", SMFVO_FIELD(double, tracking.min_score));
    f.emplace_back("tracking.score_block", SMFVO_FIELD(int, tracking.score_block));
    f.emplace_back("tracking.window", SMFVO_FIELD(int, tracking.window));
    f.emplace_back("tracking.pyramid_levels", SMFVO_FIELD(int, tracking.pyramid_levels));
    f.emplace_back("tracking.max_iters", SMFVO_FIELD(int, tracking.max_iters));
    f.emplace_back("tracking.epsilon", SMFVO_FIELD(double, tracking.epsilon));
    f.emplace_back("tracking.fb_threshold", SMFVO_FIELD(double, tracking.fb_threshold));
    f.emplace_back("tracking.stereo_max_reprojection", SMFVO_FIELD(double, tracking.stereo_max_reprojection));
    f.emplace_back("tracking.max_depth", SMFVO_FIELD(double, tracking.max_depth));

    f.emplace_back("keyframe.tau_n", SMFVO_FIELD(int, keyframe.tau_n));
    f.emplace_back("keyframe.max_elapsed", SMFVO_FIELD(int, keyframe.max_elapsed));
    f.emplace_back("keyframe.rot_thresh_deg", SMFVO_DEGREES(keyframe.rot_thresh));
    f.emplace_back("keyframe.trans_thresh", SMFVO_FIELD(double, keyframe.trans_thresh));

    f.emplace_back("opt.cauchy_c", SMFVO_FIELD(double, opt.cauchy_c));
    f.emplace_back("opt.max_iters", SMFVO_FIELD(int, opt.max_iters));
    f.emplace_back("opt.step_tolerance", SMFVO_FIELD(double, opt.step_tolerance));
    f.emplace_back("opt.damping_init", SMFVO_FIELD(double, opt.damping_init));
    f.emplace_back("opt.damping_scale", SMFVO_FIELD(double, opt.damping_scale));
    f.emplace_back("opt.min_observations", SMFVO_FIELD(int, opt.min_observations));
    return f;
  }();
  return fields;
}

#undef SMFVO_FIELD
#undef SMFVO_DEGREES

}  // namespace

void apply_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : config_fields()) {
    if (name == key) {
      try {
        field.set(config, key, value);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) parse_error(e.what());
        throw;
      }
      return;
    }
  }
  parse_error("unknown config key '" + key + "'");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig config;
  for_each_setting(text, [&](const std::string& key, const std::string& value, int) {
    apply_config_value(config, key, value);
  });
  try {
    config.validate();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    throw Error(ErrorCode::ParseError, std::string("invalid configuration: ") + e.what());
  }
  return config;
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string format_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& [name, field] : config_fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

StereoRig parse_calibration(const std::string& text) {
  std::map<std::string, std::string> kv;
  for_each_setting(text, [&](const std::string& key, const std::string& value, int line) {
    if (!kv.emplace(key, value).second) parse_error("duplicate key '" + key + "'", line);
  });
  const auto numbers = [&](const std::string& key, std::size_t min_count, std::size_t max_count) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::MissingCalibration, "calibration lacks '" + key + "'");
    std::vector<double> out;
    for (const auto& tok : split_ws(it->second)) out.push_back(number_or_throw<double>(tok, key));
    if (out.size() < min_count || out.size() > max_count)
      parse_error("'" + key + "' expects " + std::to_string(min_count) +
                  (min_count == max_count ? "" : ".." + std::to_string(max_count)) + " numbers");
    return out;
  };
  const auto camera = [&](const std::string& prefix) {
    CameraIntrinsics K;
    auto it = kv.find(prefix + ".model");
    if (it == kv.end()) throw Error(ErrorCode::MissingCalibration, "calibration lacks '" + prefix + ".model'");
    K.model = camera_model_from_string(it->second);
    K.fx = numbers(prefix + ".fx", 1, 1)[0];
    K.fy = numbers(prefix + ".fy", 1, 1)[0];
    K.cx = numbers(prefix + ".cx", 1, 1)[0];
    K.cy = numbers(prefix + ".cy", 1, 1)[0];
    K.width = static_cast<int>(numbers(prefix + ".width", 1, 1)[0]);
    K.height = static_cast<int>(numbers(prefix + ".height", 1, 1)[0]);
    if (kv.count(prefix + ".dist")) {
      const auto d = numbers(prefix + ".dist", 0, 4);
      std::copy(d.begin(), d.end(), K.dist.begin());
    }
    return K;
  };
  StereoRig rig;
  rig.left = camera("cam0");
  rig.right = camera("cam1");
  const auto R = numbers("stereo.R_rl", 9, 9);
  const auto t = numbers("stereo.t_rl", 3, 3);
  for (int i = 0; i < 9; ++i) rig.R_rl(i / 3, i % 3) = R[static_cast<std::size_t>(i)];
  rig.t_rl = Vec3(t[0], t[1], t[2]);
  if (orthonormality_error(rig.R_rl) > 1e-6 || rig.R_rl.determinant() < 0.0)
    parse_error("stereo.R_rl is not a rotation");
  try {
    rig.validate();
  } catch (const Error& e) {
    parse_error(e.what());
  }
  return rig;
}

StereoRig load_calibration(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingCalibration, "no calibration at " + path.string());
  return parse_calibration(read_file(path));
}

std::string format_calibration(const StereoRig& rig) {
  std::string out;
  const auto camera = [&](const std::string& p, const CameraIntrinsics& K) {
    out += p + ".model = " + to_string(K.model) + "\n";
    out += p + ".fx = " + shortest(K.fx) + "\n";
    out += p + ".fy = " + shortest(K.fy) + "\n";
    out += p + ".cx = " + shortest(K.cx) + "\n";
    out += p + ".cy = " + shortest(K.cy) + "\n";
    out += p + ".dist =";
    for (double d : K.dist) out += " " + shortest(d);
    out += "\n" + p + ".width = " + std::to_string(K.width) + "\n";
    out += p + ".height = " + std::to_string(K.height) + "\n";
  };
  camera("cam0", rig.left);
  camera("cam1", rig.right);
  out += "stereo.R_rl =";
  for (int i = 0; i < 9; ++i) out += " " + shortest(rig.R_rl(i / 3, i % 3));
  out += "\nstereo.t_rl =";
  for (int i = 0; i < 3; ++i) out += " " + shortest(rig.t_rl[i]);
  out += "\n";
  return out;
}

std::string format_pose_line(double timestamp, const Pose& pose) {
  Eigen::Quaterniond q = pose.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  char ts[64];
  std::snprintf(ts, sizeof ts, "%.9f", timestamp == 0.0 ? 0.0 : timestamp);
  std::string line = ts;
  for (double v : {pose.t.x(), pose.t.y(), pose.t.z(), q.x(), q.y(), q.z(), q.w()}) line += " " + shortest(v);
  return line;
}

void write_trajectory(const Trajectory& traj, const fs::path& path) {
  std::string text;
  for (const auto& sp : traj) text += format_pose_line(sp.timestamp, sp.pose) + "\n";
  write_file(path, text);
}

Trajectory parse_trajectory(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tok = split_ws(body);
    if (tok.size() != 8) parse_error("expected 8 fields, got " + std::to_string(tok.size()), line_no);
    double v[8];
    for (int i = 0; i < 8; ++i) {
      const auto x = parse_number<double>(tok[static_cast<std::size_t>(i)]);
      if (!x) parse_error("bad number '" + tok[static_cast<std::size_t>(i)] + "'", line_no);
      v[i] = *x;
    }
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-6) parse_error("quaternion is not unit length", line_no);
    if (!traj.empty() && !(v[0] > traj.back().timestamp))
      parse_error("timestamps must be strictly increasing", line_no);
    traj.push_back({v[0], Pose::from_quaternion(q, Vec3(v[1], v[2], v[3]))});
  }
  return traj;
}

Trajectory read_trajectory(const fs::path& path) { return parse_trajectory(read_file(path)); }

Alignment alignment_from_string(const std::string& name) {
  if (name == "first" || name == "first_frame") return Alignment::FirstFrame;
  if (name == "sim" || name == "similarity") return Alignment::Similarity;
  throw Error(ErrorCode::InvalidArgument, "unknown alignment '" + name + "' (expected first|sim)");
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, Alignment align) {
  std::vector<std::pair<const Pose*, const Pose*>> pairs;
  for (const auto& e : est) {
    auto it = std::lower_bound(gt.begin(), gt.end(), e.timestamp,
                               [](const StampedPose& g, double t) { return g.timestamp < t; });
    const StampedPose* best = nullptr;
    if (it != gt.end()) best = &*it;
    if (it != gt.begin() &&
        (!best || std::abs(std::prev(it)->timestamp - e.timestamp) <= std::abs(best->timestamp - e.timestamp)))
      best = &*std::prev(it);
    if (best && std::abs(best->timestamp - e.timestamp) <= kAssociationGate + 1e-12)
      pairs.emplace_back(&e.pose, &best->pose);
  }
  if (pairs.size() < 2)
    throw Error(ErrorCode::NoOverlap, "only " + std::to_string(pairs.size()) + " poses associate within 10 ms");

  Pose T;  // maps estimate world to ground-truth world
  if (align == Alignment::FirstFrame) {
    T = *pairs.front().second * pairs.front().first->inverse();
  } else {
    Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pairs.size()));
    Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = pairs[i].first->t;
      dst.col(static_cast<Eigen::Index>(i)) = pairs[i].second->t;
    }
    const Eigen::Matrix4d M = Eigen::umeyama(src, dst, false);
    T.R = M.topLeftCorner<3, 3>();
    T.t = M.topRightCorner<3, 1>();
  }
  double sq = 0.0;
  for (const auto& [e, g] : pairs) sq += (T.transform(e->t) - g->t).squaredNorm();
  return std::sqrt(sq / static_cast<double>(pairs.size()));
}

DatasetFormat dataset_format_from_string(const std::string& name) {
  if (name == "euroc") return DatasetFormat::Euroc;
  if (name == "synth") return DatasetFormat::Synth;
  throw Error(ErrorCode::InvalidArgument, "unknown dataset format '" + name + "' (expected euroc|synth)");
}

namespace {

struct IndexedImage {
  std::int64_t ns;
  fs::path path;
};

std::vector<IndexedImage> read_camera_index(const fs::path& cam_dir) {
  const fs::path csv = cam_dir / "data.csv";
  std::vector<IndexedImage> out;
  std::istringstream in(read_file(csv));
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto comma = body.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::ParseError, csv.string() + " line " + std::to_string(line_no) + ": expected 'timestamp,filename'");
    const auto ns = parse_number<std::int64_t>(trim(std::string_view(body).substr(0, comma)));
    if (!ns)
      throw Error(ErrorCode::ParseError, csv.string() + " line " + std::to_string(line_no) + ": bad timestamp");
    out.push_back({*ns, cam_dir / "data" / trim(std::string_view(body).substr(comma + 1))});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ns < b.ns; });
  out.erase(std::unique(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ns == b.ns; }),
            out.end());
  return out;
}

}  // namespace

DatasetReader load_dataset(const fs::path& path, DatasetFormat format) {
  if (!fs::is_directory(path)) throw Error(ErrorCode::Io, "not a directory: " + path.string());
  fs::path root = path;
  if (format == DatasetFormat::Euroc && !fs::exists(root / "cam0") && fs::is_directory(root / "mav0"))
    root = root / "mav0";

  DatasetReader reader;
  reader.root_ = root;
  fs::path calib = root / "calib.txt";
  if (!fs::exists(calib) && root != path) calib = path / "calib.txt";
  reader.rig_ = load_calibration(calib);

  if (!fs::exists(root / "cam0" / "data.csv")) throw Error(ErrorCode::EmptySequence, "no cam0/data.csv in " + root.string());
  const auto left = read_camera_index(root / "cam0");
  if (left.empty()) throw Error(ErrorCode::EmptySequence, "cam0 lists no frames");
  if (!fs::exists(root / "cam1" / "data.csv")) throw Error(ErrorCode::UnpairableStreams, "no cam1/data.csv in " + root.string());
  const auto right = read_camera_index(root / "cam1");

  std::size_t j = 0;
  for (const auto& l : left) {
    while (j + 1 < right.size() && std::abs(right[j + 1].ns - l.ns) <= std::abs(right[j].ns - l.ns)) ++j;
    if (j < right.size() && std::abs(right[j].ns - l.ns) <= kStereoPairingGateNs)
      reader.frames_.push_back({static_cast<double>(l.ns) * 1e-9, l.path, right[j].path});
  }
  if (reader.frames_.empty()) throw Error(ErrorCode::UnpairableStreams, "no left/right pair within 1 ms");

  for (const fs::path& gt : {root / "groundtruth.txt", path / "groundtruth.txt"}) {
    if (fs::exists(gt)) {
      reader.ground_truth_ = read_trajectory(gt);
      break;
    }
  }
  if (format == DatasetFormat::Synth && !reader.ground_truth_)
    throw Error(ErrorCode::EmptySequence, "synth dataset lacks groundtruth.txt");
  return reader;
}

std::pair<cv::Mat, cv::Mat> DatasetReader::load(std::size_t i) const {
  const StereoFrame& f = frames_.at(i);
  cv::Mat l = cv::imread(f.left.string(), cv::IMREAD_GRAYSCALE);
  cv::Mat r = cv::imread(f.right.string(), cv::IMREAD_GRAYSCALE);
  if (l.empty()) throw Error(ErrorCode::Io, "cannot read " + f.left.string());
  if (r.empty()) throw Error(ErrorCode::Io, "cannot read " + f.right.string());
  return {l, r};
}

void write_synth_dataset(const SyntheticScene& scene, const fs::path& dir, double period) {
  if (!scene.room) throw Error(ErrorCode::InvalidArgument, "scene has no texture to render");
  if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "frame period must be positive");
  for (const char* cam : {"cam0", "cam1"}) fs::create_directories(dir / cam / "data");
  const RoomRenderer left(scene.room, scene.rig.left);
  const RoomRenderer right(scene.room, scene.rig.right);
  std::string csv0 = "#timestamp [ns],filename\n", csv1 = csv0;
  Trajectory gt;
  for (std::size_t k = 0; k < scene.poses.size(); ++k) {
    const auto ns = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * period * 1e9));
    const std::string name = std::to_string(ns) + ".png";
    if (!cv::imwrite((dir / "cam0" / "data" / name).string(), left.render(scene.poses[k])) ||
        !cv::imwrite((dir / "cam1" / "data" / name).string(),
                     right.render(right_camera_pose(scene.rig, scene.poses[k]))))
      throw Error(ErrorCode::Io, "cannot write images under " + dir.string());
    csv0 += std::to_string(ns) + "," + name + "\n";
    csv1 += std::to_string(ns) + "," + name + "\n";
    gt.push_back({static_cast<double>(ns) * 1e-9, scene.poses[k]});
  }
  write_file(dir / "cam0" / "data.csv", csv0);
  write_file(dir / "cam1" / "data.csv", csv1);
  write_file(dir / "calib.txt", format_calibration(scene.rig));
  write_trajectory(gt, dir / "groundtruth.txt");
}

std::string format_stats_row(const FrameResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.9f,%.1f,%.1f,%.1f,%.1f,%.1f,%d,%d,%d", r.timestamp, r.timings.track_us,
                r.timings.depth_us, r.timings.ransac_us, r.timings.opt_us, r.timings.total_us,
                r.feature_count, r.inlier_count, r.is_keyframe ? 1 : 0);
  return buf;
}

StatsWriter::StatsWriter(const fs::path& path) : out_(path) {
  if (!out_) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out_ << kStatsHeader << "\n";
}

void StatsWriter::write(const FrameResult& r) {
  out_ << format_stats_row(r) << "\n";
  out_.flush();
  if (!out_) throw Error(ErrorCode::Io, "stats write failed");
}

}  // namespace smfvo
