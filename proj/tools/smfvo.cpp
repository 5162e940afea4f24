#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smfvo/smfvo.h"

namespace {

template <typename T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};

using Config = std::unique_ptr<smfvo_config, Deleter<smfvo_config, smfvo_config_destroy>>;
using Rig = std::unique_ptr<smfvo_rig, Deleter<smfvo_rig, smfvo_rig_destroy>>;
using Dataset = std::unique_ptr<smfvo_dataset, Deleter<smfvo_dataset, smfvo_dataset_destroy>>;
using PipelineHandle = std::unique_ptr<smfvo_pipeline, Deleter<smfvo_pipeline, smfvo_pipeline_destroy>>;
using TrajectoryHandle = std::unique_ptr<smfvo_trajectory, Deleter<smfvo_trajectory, smfvo_trajectory_destroy>>;
using Stats = std::unique_ptr<smfvo_stats_writer, Deleter<smfvo_stats_writer, smfvo_stats_close>>;

struct Failure {
  smfvo_status status;
};

void check(smfvo_status status, const std::string& context) {
  if (status == SMFVO_OK) return;
  std::fprintf(stderr, "smfvo: %s: %s: %s\n", context.c_str(), smfvo_status_string(status), smfvo_last_error());
  throw Failure{status};
}

struct RunArgs {
  std::string dataset, format = "euroc", config, mode, out, stats;
  bool no_opt = false;
};

int run(const RunArgs& a) {
  smfvo_config* raw_config = nullptr;
  if (a.config.empty())
    check(smfvo_config_create(&raw_config), "config");
  else
    check(smfvo_config_load(a.config.c_str(), &raw_config), a.config);
  Config config(raw_config);
  if (!a.mode.empty()) check(smfvo_config_set(config.get(), "pipeline.mode", a.mode.c_str()), "--mode");
  if (a.no_opt) check(smfvo_config_set(config.get(), "pipeline.optimize", "false"), "--no-opt");

  smfvo_dataset* raw_dataset = nullptr;
  check(smfvo_dataset_open(a.dataset.c_str(), a.format.c_str(), &raw_dataset), a.dataset);
  Dataset dataset(raw_dataset);
  smfvo_rig* raw_rig = nullptr;
  check(smfvo_dataset_rig(dataset.get(), &raw_rig), "calibration");
  Rig rig(raw_rig);
  smfvo_pipeline* raw_pipeline = nullptr;
  check(smfvo_pipeline_create(rig.get(), config.get(), &raw_pipeline), "pipeline");
  PipelineHandle pipeline(raw_pipeline);

  Stats stats;
  if (!a.stats.empty()) {
    smfvo_stats_writer* raw_stats = nullptr;
    check(smfvo_stats_open(a.stats.c_str(), &raw_stats), a.stats);
    stats.reset(raw_stats);
  }

  const std::size_t n = smfvo_dataset_size(dataset.get());
  double core_us = 0.0;
  int fallbacks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    smfvo_frame_result r{};
    check(smfvo_pipeline_process_dataset_frame(pipeline.get(), dataset.get(), i, &r), "frame " + std::to_string(i));
    if (stats) check(smfvo_stats_write(stats.get(), &r), a.stats);
    core_us += r.track_us + r.ransac_us + r.opt_us;
    fallbacks += r.fallback;
  }

  smfvo_trajectory* raw_traj = nullptr;
  check(smfvo_pipeline_trajectory(pipeline.get(), &raw_traj), "trajectory");
  TrajectoryHandle traj(raw_traj);
  check(smfvo_trajectory_write(traj.get(), a.out.c_str()), a.out);

  std::fprintf(stderr, "frames: %zu  core ms/frame: %.3f  fallbacks: %d\n", n,
               n ? core_us / 1000.0 / static_cast<double>(n) : 0.0, fallbacks);
  smfvo_trajectory* raw_gt = nullptr;
  check(smfvo_dataset_ground_truth(dataset.get(), &raw_gt), "ground truth");
  TrajectoryHandle gt(raw_gt);
  if (gt) {
    double rmse = 0.0;
    if (smfvo_ate_rmse(traj.get(), gt.get(), "first", &rmse) == SMFVO_OK)
      std::fprintf(stderr, "ATE_RMSE_m (first frame): %.6f\n", rmse);
  }
  return 0;
}

int eval(const std::string& est_path, const std::string& gt_path, const std::string& align) {
  smfvo_trajectory* raw = nullptr;
  check(smfvo_trajectory_read(est_path.c_str(), &raw), est_path);
  TrajectoryHandle est(raw);
  check(smfvo_trajectory_read(gt_path.c_str(), &raw), gt_path);
  TrajectoryHandle gt(raw);
  double rmse = 0.0;
  check(smfvo_ate_rmse(est.get(), gt.get(), align.c_str(), &rmse), "eval");
  std::printf("ATE_RMSE_m: %.6f\n", rmse);
  return 0;
}

std::vector<double> parse_twist(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw CLI::ValidationError("--twist", "bad number '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != 6) throw CLI::ValidationError("--twist", "expected six comma-separated numbers");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo visual odometry from ray motion fields"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(smfvo_version()));

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Estimate a trajectory over a stereo dataset");
  run_cmd->add_option("--dataset", run_args.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  run_cmd->add_option("--format", run_args.format, "Dataset layout")
      ->check(CLI::IsMember({"euroc", "synth"}))
      ->capture_default_str();
  run_cmd->add_option("--config", run_args.config, "Config file (section.key = value)")->check(CLI::ExistingFile);
  run_cmd->add_option("--mode", run_args.mode, "Motion model; overrides pipeline.mode")
      ->check(CLI::IsMember({"ray", "pixel"}));
  run_cmd->add_flag("--no-opt", run_args.no_opt, "Disable keyframe optimization");
  run_cmd->add_option("--out", run_args.out, "Trajectory output file")->required();
  run_cmd->add_option("--stats", run_args.stats, "Per-frame stats CSV");

  std::string est, gt, align = "first";
  auto* eval_cmd = app.add_subcommand("eval", "RMSE absolute trajectory error");
  eval_cmd->add_option("--est", est, "Estimated trajectory")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gt", gt, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--align", align, "Alignment")->check(CLI::IsMember({"first", "sim"}))->capture_default_str();

  smfvo_synth_options synth;
  smfvo_synth_options_init(&synth);
  std::string twist_text = "0,0.0126,0,0,0,0.02", camera = "pinhole", synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic stereo sequence");
  synth_cmd->add_option("--seed", synth.seed, "Texture seed")->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames, "Frame count")->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--twist", twist_text, "wx,wy,wz,vx,vy,vz per frame (rad, m)")->capture_default_str();
  synth_cmd->add_option("--camera", camera, "Rig")->check(CLI::IsMember({"pinhole", "fisheye"}))->capture_default_str();
  synth_cmd->add_option("--period", synth.period_s, "Seconds between frames")->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run_cmd) return run(run_args);
    if (*eval_cmd) return eval(est, gt, align);
    if (*synth_cmd) {
      std::vector<double> s;
      try {
        s = parse_twist(twist_text);
      } catch (const CLI::ParseError& e) {
        return app.exit(e);
      }
      std::copy(s.begin(), s.end(), synth.twist);
      synth.camera = camera.c_str();
      check(smfvo_synth_write(&synth, synth_out.c_str()), synth_out);
      std::fprintf(stderr, "wrote %d frames to %s\n", synth.frames, synth_out.c_str());
      return 0;
    }
  } catch (const Failure& f) {
    return 1 + static_cast<int>(f.status);
  }
  return 0;
}
