#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "radarflow/deformation.hpp"
#include "radarflow/ego_motion.hpp"
#include "radarflow/flow_lift.hpp"
#include "radarflow/io.hpp"
#include "radarflow/pipeline.hpp"
#include "radarflow/rng.hpp"
#include "radarflow/scale_recovery.hpp"
#include "radarflow/segmentation.hpp"
#include "radarflow/simulator.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace radarflow;

namespace {

struct GlobalOpts {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool verbose = false;
};

std::string indexed(const char* stem, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, k, ext);
  return buf;
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) {
    throw Error(ErrorCode::IoError, "input does not exist: " + p.string());
  }
}

void log_verbose(const GlobalOpts& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[radarflow] " << msg << "\n";
}

// ---- simulate --------------------------------------------------------------

void cmd_simulate(const GlobalOpts& g, const fs::path& config_path, const fs::path& out_dir,
                  bool write_ply_files) {
  SceneConfig cfg =
      config_path.empty() ? SceneConfig::default_test_scene() : io::read_scene_config(config_path);
  if (g.seed) cfg.seed = *g.seed;
  const Scene scene(cfg);
  const auto bundles = simulate(cfg, g.threads);
  log_verbose(g, "simulated " + std::to_string(bundles.size()) + " frames");

  fs::create_directories(out_dir);
  io::write_scene_config(out_dir / "scene.json", cfg);
  io::write_camera_json(out_dir / "cam.json", cfg.camera);

  std::vector<RadarFrame> frames;
  std::vector<std::vector<bool>> labels;
  Json poses = Json::array();
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    const FrameBundle& fb = bundles[k];
    frames.push_back(fb.radar);
    labels.push_back(fb.dyn_labels_gt);
    io::write_depth(out_dir / indexed("depth_metric", k, "dpf"), fb.depth_metric);
    io::write_depth(out_dir / indexed("depth_rel", k, "dpf"), fb.depth_relative);
    io::write_mask_pgm(out_dir / indexed("mask", k, "pgm"), fb.mask_gt);
    if (fb.flow_to_next) io::write_flow(out_dir / indexed("flow", k, "flw"), *fb.flow_to_next);
    if (write_ply_files) {
      std::vector<Vec3> pts;
      std::vector<double> vr;
      for (const RadarPoint& p : fb.radar.points) {
        pts.push_back(p.position);
        vr.push_back(p.radial_velocity);
      }
      io::write_ply(out_dir / indexed("radar", k, "ply"), pts, &vr);
    }
    Json objects = Json::array();
    for (const Vec3& c : fb.object_centers) objects.push_back({c.x(), c.y(), c.z()});
    Json pose;
    pose["t"] = fb.timestamp;
    const Mat4 m = fb.ego_pose.matrix();
    Json mat = Json::array();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) mat.push_back(m(r, c));
    }
    pose["world_from_ego"] = std::move(mat);
    pose["ego_velocity_sensor"] = {fb.ego_velocity_sensor.x(), fb.ego_velocity_sensor.y(),
                                   fb.ego_velocity_sensor.z()};
    pose["objects"] = std::move(objects);
    poses.push_back(std::move(pose));
  }
  io::write_radar_jsonl(out_dir / "radar.jsonl", frames);
  io::write_labels_jsonl(out_dir / "labels_gt.jsonl", labels);
  io::save_json(out_dir / "poses.json",
                Json{{"frames", poses}, {"s_gt", cfg.relative_depth_scale}});
}

// ---- ego-motion ------------------------------------------------------------

void cmd_ego_motion(const GlobalOpts& g, const fs::path& frames_path, const fs::path& config_path,
                    const fs::path& out_path, const fs::path& labels_out, double tau_dyn) {
  require_exists(frames_path);
  RansacConfig cfg;
  if (!config_path.empty()) cfg = io::ransac_config_from_json(io::load_json(config_path));
  const auto frames = io::read_radar_jsonl(frames_path);

  std::vector<io::EgoRecord> records;
  std::vector<std::vector<bool>> labels;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    RansacConfig rc = cfg;
    if (g.seed) rc.seed = derive_seed(*g.seed, "ego-motion", k + 1);
    const EgoMotionEstimate est = estimate_ego_velocity(frames[k], rc);
    records.push_back({frames[k].timestamp, est});
    if (!labels_out.empty()) labels.push_back(classify_dynamic(frames[k], est, tau_dyn));
  }
  io::write_ego_jsonl(out_path, records);
  if (!labels_out.empty()) io::write_labels_jsonl(labels_out, labels);
  log_verbose(g, "estimated " + std::to_string(records.size()) + " frames");
}

// ---- segment ---------------------------------------------------------------

void cmd_segment(const GlobalOpts& g, const fs::path& frames_path, const fs::path& ego_path,
                 const fs::path& cam_path, const fs::path& out_mask_dir, double tau_dyn,
                 std::uint32_t patch_size, std::uint32_t max_anchors, double sigma_px,
                 double tau) {
  require_exists(frames_path);
  require_exists(ego_path);
  require_exists(cam_path);
  const auto frames = io::read_radar_jsonl(frames_path);
  const auto ego = io::read_ego_jsonl(ego_path);
  const CameraModel cam = io::read_camera_json(cam_path);
  if (ego.size() != frames.size()) {
    throw Error(ErrorCode::LengthMismatch, "ego record count != frame count");
  }
  fs::create_directories(out_mask_dir);
  const std::uint64_t seed = g.seed.value_or(0);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto labels = classify_dynamic(frames[k], ego[k].estimate, tau_dyn);
    const auto anchors = project_dynamic_rois(frames[k], labels, cam, patch_size, max_anchors,
                                              derive_seed(seed, "segment", k + 1));
    std::vector<Roi> rois;
    for (const auto& a : anchors) {
      rois.push_back(score_roi_geometric(frames[k], labels, cam, a, patch_size, sigma_px));
    }
    const DynamicMask mask = composite_mask(rois, cam.width, cam.height, tau);
    io::write_mask_pgm(out_mask_dir / indexed("mask", k, "pgm"), mask);
  }
  log_verbose(g, "wrote " + std::to_string(frames.size()) + " masks");
}

// ---- scale -----------------------------------------------------------------

void cmd_scale(const GlobalOpts& g, const fs::path& depth_path, const fs::path& cam_path,
               const fs::path& frames_path, const fs::path& labels_path,
               const fs::path& config_path, const fs::path& out_path, const fs::path& report_path,
               std::size_t frame_index) {
  require_exists(depth_path);
  require_exists(cam_path);
  require_exists(frames_path);
  require_exists(labels_path);
  ScaleConfig cfg;
  if (!config_path.empty()) cfg = io::scale_config_from_json(io::load_json(config_path));
  const DepthImage depth = io::read_depth(depth_path);
  const CameraModel cam = io::read_camera_json(cam_path);
  const auto frames = io::read_radar_jsonl(frames_path);
  const auto labels = io::read_labels_jsonl(labels_path);
  if (frame_index >= frames.size() || frame_index >= labels.size()) {
    throw Error(ErrorCode::OutOfBounds,
                "frame index " + std::to_string(frame_index) + " out of range");
  }

  const auto samples =
      collect_scale_samples(depth, cam, frames[frame_index], labels[frame_index], cfg);
  const double s = vote_scale(samples, cfg);
  const DepthImage metric = apply_scale(depth, s);
  io::write_depth(out_path, metric);

  std::size_t static_count = 0;
  for (bool b : labels[frame_index]) static_count += b ? 0 : 1;
  if (!report_path.empty()) {
    io::save_json(report_path,
                  Json{{"scale", s},
                       {"samples", samples.size()},
                       {"acceptance_rate",
                        double(samples.size()) / double(std::max<std::size_t>(1, static_count))}});
  }
  log_verbose(g, "voted scale " + std::to_string(s));
}

// ---- lift-flow -------------------------------------------------------------

void cmd_lift_flow(const GlobalOpts& g, const fs::path& flow_path, const fs::path& depth_i_path,
                   const fs::path& depth_j_path, const fs::path& mask_path,
                   const fs::path& cam_path, const fs::path& frames_path,
                   const fs::path& ego_path, std::size_t frame_index, std::uint32_t stride,
                   double max_assoc, const fs::path& out_path, double tau_dyn) {
  for (const fs::path& p :
       {flow_path, depth_i_path, depth_j_path, mask_path, cam_path, frames_path}) {
    require_exists(p);
  }
  const FlowImage flow = io::read_flow(flow_path);
  const DepthImage depth_i = io::read_depth(depth_i_path);
  const DepthImage depth_j = io::read_depth(depth_j_path);
  const DynamicMask mask = io::read_mask_pgm(mask_path);
  const CameraModel cam = io::read_camera_json(cam_path);
  const auto frames = io::read_radar_jsonl(frames_path);
  if (frame_index + 1 >= frames.size()) {
    throw Error(ErrorCode::OutOfBounds, "frame index needs a successor frame");
  }
  const RadarFrame& fi = frames[frame_index];
  const RadarFrame& fj = frames[frame_index + 1];
  const RigidTransform pose_i = fi.sensor_from_world.inverse();
  const RigidTransform pose_j = fj.sensor_from_world.inverse();

  auto samples = lift_scene_flow(flow, depth_i, depth_j, mask, cam, pose_i, pose_j, fi.timestamp,
                                 fj.timestamp, stride);

  if (!ego_path.empty()) {
    require_exists(ego_path);
    const auto ego = io::read_ego_jsonl(ego_path);
    if (frame_index < ego.size()) {
      const auto labels = classify_dynamic(fi, ego[frame_index].estimate, tau_dyn);
      bool any_dynamic = false;
      for (bool b : labels) any_dynamic |= b;
      if (any_dynamic && !samples.empty()) {
        samples = associate_radial_velocity(std::move(samples), fi, labels, pose_i,
                                            ego[frame_index].estimate.velocity, max_assoc);
      }
    }
  }
  io::write_samples_jsonl(out_path, samples);
  log_verbose(g, "lifted " + std::to_string(samples.size()) + " samples");
}

// ---- fit-deform ------------------------------------------------------------

void cmd_fit_deform(const GlobalOpts& g, const fs::path& samples_path,
                    const fs::path& config_path, const fs::path& out_path,
                    const fs::path& history_path) {
  require_exists(samples_path);
  TrainConfig cfg;
  if (!config_path.empty()) cfg = io::train_config_from_json(io::load_json(config_path));
  if (g.seed) cfg.seed = *g.seed;
  const auto samples = io::read_samples_jsonl(samples_path);
  CouplingField field = CouplingField::init_for_samples(samples, 6, cfg.seed);
  const FitResult result = fit(std::move(field), samples, cfg);
  io::write_field_json(out_path, result.field);
  if (!history_path.empty()) {
    std::string csv = "iteration,loss\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      csv += std::to_string(i) + "," + Json(result.loss_history[i]).dump() + "\n";
    }
    io::save_text(history_path, csv);
  }
  log_verbose(g, "trained field on " + std::to_string(samples.size()) + " samples");
}

// ---- eval ------------------------------------------------------------------

void cmd_eval(const GlobalOpts& g, const fs::path& gt_dir, const fs::path& pred_dir,
              const fs::path& report_path) {
  require_exists(gt_dir / "scene.json");
  const SceneConfig cfg = io::read_scene_config(gt_dir / "scene.json");
  const Scene scene(cfg);
  const auto bundles = simulate(cfg, g.threads);

  PipelinePredictions pred;
  if (fs::exists(pred_dir / "ego.jsonl")) {
    for (const io::EgoRecord& r : io::read_ego_jsonl(pred_dir / "ego.jsonl")) {
      pred.ego_velocities.push_back(r.estimate.velocity);
    }
  }
  if (fs::exists(pred_dir / "labels.jsonl")) {
    pred.dyn_labels = io::read_labels_jsonl(pred_dir / "labels.jsonl");
  }
  for (std::size_t k = 0; fs::exists(pred_dir / "masks" / indexed("mask", k, "pgm")); ++k) {
    pred.masks.push_back(io::read_mask_pgm(pred_dir / "masks" / indexed("mask", k, "pgm")));
  }
  if (fs::exists(pred_dir / "scale.json")) {
    const Json scale = io::load_json(pred_dir / "scale.json");
    if (scale.contains("frames")) {
      for (const Json& f : scale["frames"]) pred.scales.push_back(f.at("scale").get<double>());
    } else if (scale.contains("scale")) {
      pred.scales.push_back(scale["scale"].get<double>());
    }
  }
  for (std::size_t k = 0; fs::exists(pred_dir / "samples" / indexed("pair", k, "jsonl")); ++k) {
    pred.flow_samples.push_back(
        io::read_samples_jsonl(pred_dir / "samples" / indexed("pair", k, "jsonl")));
  }
  CouplingField field;
  if (fs::exists(pred_dir / "field.json")) {
    field = io::read_field_json(pred_dir / "field.json");
    pred.field = &field;
  }

  const MetricsReport report = evaluate(scene, bundles, pred);
  const Json j = io::metrics_to_json(report);
  io::save_json(report_path, j);
  fs::path csv_path = report_path;
  csv_path.replace_extension(".csv");
  io::save_text(csv_path, io::metrics_to_csv(report));
  log_verbose(g, "wrote " + report_path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D radar assisted scene-flow toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Top-level seed (derives stage seeds)");
  auto* threads_opt = app.add_option("--threads", g.threads,
                                     "Worker threads for frame generation (env RADARFLOW_THREADS)")
                          ->envname("RADARFLOW_THREADS");
  app.add_flag("--verbose", g.verbose, "Log progress to stderr");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene with ground truth");
  fs::path sim_config, sim_out = "scene";
  bool sim_ply = false;
  sim->add_option("--config", sim_config, "SceneConfig JSON (default: built-in test scene)");
  sim->add_option("--out-dir", sim_out, "Output directory")->required();
  sim->add_flag("--ply", sim_ply, "Also export radar point clouds as ASCII PLY");

  // ego-motion
  auto* ego = app.add_subcommand("ego-motion", "Estimate per-frame ego velocity from radar");
  fs::path ego_frames, ego_config, ego_out, ego_labels;
  double ego_tau_dyn = 0.5;
  ego->add_option("--frames", ego_frames, "Radar frames JSONL")->required();
  ego->add_option("--config", ego_config, "RansacConfig JSON");
  ego->add_option("--out", ego_out, "Estimates JSONL output")->required();
  ego->add_option("--labels-out", ego_labels, "Also write dynamic labels JSONL");
  ego->add_option("--tau-dyn", ego_tau_dyn, "Dynamic threshold, m/s");

  // segment
  auto* seg = app.add_subcommand("segment", "Composite dynamic masks from radar anchors");
  fs::path seg_frames, seg_ego, seg_cam, seg_out;
  double seg_tau_dyn = 0.5, seg_sigma = 24.0, seg_tau = 0.5;
  std::uint32_t seg_patch = 256, seg_anchors = 16;
  seg->add_option("--frames", seg_frames, "Radar frames JSONL")->required();
  seg->add_option("--ego", seg_ego, "Ego estimates JSONL")->required();
  seg->add_option("--cam", seg_cam, "Camera JSON")->required();
  seg->add_option("--out-mask-dir", seg_out, "Mask output directory")->required();
  seg->add_option("--tau-dyn", seg_tau_dyn, "Dynamic threshold, m/s");
  seg->add_option("--patch-size", seg_patch, "ROI patch size, px");
  seg->add_option("--max-anchors", seg_anchors, "Anchors per frame");
  seg->add_option("--sigma-px", seg_sigma, "Stand-in scorer kernel width, px");
  seg->add_option("--tau", seg_tau, "Mask threshold on composited confidence");

  // scale
  auto* scale = app.add_subcommand("scale", "Recover metric scale of a relative depth map");
  fs::path scale_depth, scale_cam, scale_frames, scale_labels, scale_config, scale_out,
      scale_report;
  std::size_t scale_index = 0;
  scale->add_option("--depth", scale_depth, "Relative depth DPF1")->required();
  scale->add_option("--cam", scale_cam, "Camera JSON")->required();
  scale->add_option("--frame", scale_frames, "Radar frames JSONL")->required();
  scale->add_option("--labels", scale_labels, "Dynamic labels JSONL")->required();
  scale->add_option("--config", scale_config, "ScaleConfig JSON");
  scale->add_option("--out", scale_out, "Scaled metric depth DPF1")->required();
  scale->add_option("--report", scale_report, "Report JSON");
  scale->add_option("--frame-index", scale_index, "Frame to use from the JSONL");

  // lift-flow
  auto* lift = app.add_subcommand("lift-flow", "Lift 2D flow and depth to 3D scene flow");
  fs::path lift_flow, lift_di, lift_dj, lift_mask, lift_cam, lift_frames, lift_ego, lift_out;
  std::size_t lift_index = 0;
  std::uint32_t lift_stride = 4;
  double lift_assoc = 3.0, lift_tau_dyn = 0.5;
  lift->add_option("--flow", lift_flow, "Flow FLW1")->required();
  lift->add_option("--depth-i", lift_di, "Metric depth at t_i (DPF1)")->required();
  lift->add_option("--depth-j", lift_dj, "Metric depth at t_j (DPF1)")->required();
  lift->add_option("--mask", lift_mask, "Dynamic mask PGM")->required();
  lift->add_option("--cam", lift_cam, "Camera JSON")->required();
  lift->add_option("--frames", lift_frames, "Radar frames JSONL")->required();
  lift->add_option("--ego", lift_ego, "Ego estimates JSONL (for radial velocities)");
  lift->add_option("--frame-index", lift_index, "Index of t_i in the JSONL");
  lift->add_option("--stride", lift_stride, "Pixel stride");
  lift->add_option("--max-assoc-dist", lift_assoc, "Radar association cap, m");
  lift->add_option("--tau-dyn", lift_tau_dyn, "Dynamic threshold for association, m/s");
  lift->add_option("--out", lift_out, "Samples JSONL output")->required();

  // fit-deform
  auto* fitc = app.add_subcommand("fit-deform", "Train the deformation field on samples");
  fs::path fit_samples, fit_config, fit_out, fit_history;
  fitc->add_option("--samples", fit_samples, "Samples JSONL")->required();
  fitc->add_option("--config", fit_config, "TrainConfig JSON");
  fitc->add_option("--out", fit_out, "Trained field JSON")->required();
  fitc->add_option("--history", fit_history, "Loss history CSV");

  // eval
  auto* eval = app.add_subcommand("eval", "Score pipeline outputs against scene ground truth");
  fs::path eval_gt, eval_pred, eval_report = "report.json";
  eval->add_option("--gt", eval_gt, "Ground-truth scene directory (from simulate)")->required();
  eval->add_option("--pred", eval_pred, "Prediction directory (from pipeline)")->required();
  eval->add_option("--report", eval_report, "Report JSON output");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage end to end");
  fs::path pipe_config;
  fs::path pipe_out;
  pipe->add_option("--config", pipe_config, "PipelineConfig JSON")->required();
  pipe->add_option("--out-dir", pipe_out, "Override the config's output directory");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed_value;

  try {
    if (sim->parsed()) {
      cmd_simulate(g, sim_config, sim_out, sim_ply);
    } else if (ego->parsed()) {
      cmd_ego_motion(g, ego_frames, ego_config, ego_out, ego_labels, ego_tau_dyn);
    } else if (seg->parsed()) {
      cmd_segment(g, seg_frames, seg_ego, seg_cam, seg_out, seg_tau_dyn, seg_patch, seg_anchors,
                  seg_sigma, seg_tau);
    } else if (scale->parsed()) {
      cmd_scale(g, scale_depth, scale_cam, scale_frames, scale_labels, scale_config, scale_out,
                scale_report, scale_index);
    } else if (lift->parsed()) {
      cmd_lift_flow(g, lift_flow, lift_di, lift_dj, lift_mask, lift_cam, lift_frames, lift_ego,
                    lift_index, lift_stride, lift_assoc, lift_out, lift_tau_dyn);
    } else if (fitc->parsed()) {
      cmd_fit_deform(g, fit_samples, fit_config, fit_out, fit_history);
    } else if (eval->parsed()) {
      cmd_eval(g, eval_gt, eval_pred, eval_report);
    } else if (pipe->parsed()) {
      require_exists(pipe_config);
      PipelineConfig cfg = pipeline_config_from_json(io::load_json(pipe_config));
      if (!pipe_out.empty()) cfg.out_dir = pipe_out;
      if (g.seed) cfg.seed = *g.seed;
      if (threads_opt->count()) cfg.threads = g.threads;
      run_pipeline(cfg);
    }
  } catch (const Error& e) {
    std::cerr << Json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", {{"code", "Unhandled"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
