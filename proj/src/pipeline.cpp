#include "radarflow/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "radarflow/flow_lift.hpp"
#include "radarflow/io.hpp"
#include "radarflow/rng.hpp"
#include "radarflow/segmentation.hpp"

namespace radarflow {
namespace {

using Json = nlohmann::json;

std::string indexed_name(const char* stem, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, k, ext);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  if (m == 0) return 0.0;
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace

PipelineConfig pipeline_config_from_json(const Json& j) {
  io::require_keys(j,
                   {"scene", "out_dir", "ransac", "tau_dyn", "segmentation", "scale", "lift",
                    "train", "seed", "threads"},
                   "pipeline config");
  PipelineConfig cfg;
  if (j.contains("scene")) cfg.scene = io::scene_config_from_json(j["scene"]);
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("ransac")) cfg.ransac = io::ransac_config_from_json(j["ransac"]);
  if (j.contains("tau_dyn")) cfg.tau_dyn = j["tau_dyn"].get<double>();
  if (j.contains("segmentation")) {
    const Json& s = j["segmentation"];
    io::require_keys(s, {"patch_size", "max_anchors", "sigma_px", "tau"},
                     "pipeline config.segmentation");
    cfg.segmentation.patch_size = s.value("patch_size", cfg.segmentation.patch_size);
    cfg.segmentation.max_anchors = s.value("max_anchors", cfg.segmentation.max_anchors);
    cfg.segmentation.sigma_px = s.value("sigma_px", cfg.segmentation.sigma_px);
    cfg.segmentation.tau = s.value("tau", cfg.segmentation.tau);
  }
  if (j.contains("scale")) cfg.scale = io::scale_config_from_json(j["scale"]);
  if (j.contains("lift")) {
    const Json& s = j["lift"];
    io::require_keys(s, {"stride", "max_assoc_distance"}, "pipeline config.lift");
    cfg.lift.stride = s.value("stride", cfg.lift.stride);
    cfg.lift.max_assoc_distance = s.value("max_assoc_distance", cfg.lift.max_assoc_distance);
  }
  if (j.contains("train")) cfg.train = io::train_config_from_json(j["train"]);
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<unsigned>();
  return cfg;
}

Json pipeline_config_to_json(const PipelineConfig& cfg) {
  Json j;
  j["scene"] = io::scene_config_to_json(cfg.scene);
  j["out_dir"] = cfg.out_dir.string();
  j["ransac"] = io::ransac_config_to_json(cfg.ransac);
  j["tau_dyn"] = cfg.tau_dyn;
  j["segmentation"] = {{"patch_size", cfg.segmentation.patch_size},
                       {"max_anchors", cfg.segmentation.max_anchors},
                       {"sigma_px", cfg.segmentation.sigma_px},
                       {"tau", cfg.segmentation.tau}};
  j["scale"] = io::scale_config_to_json(cfg.scale);
  j["lift"] = {{"stride", cfg.lift.stride},
               {"max_assoc_distance", cfg.lift.max_assoc_distance}};
  j["train"] = io::train_config_to_json(cfg.train);
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  fs::create_directories(out / "masks");
  fs::create_directories(out / "samples");

  // The manifest hash covers everything that determines the numbers, which
  // deliberately excludes out_dir and threads.
  Json hashed = pipeline_config_to_json(cfg);
  hashed.erase("out_dir");
  hashed.erase("threads");
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                (unsigned long long)fnv1a64(hashed.dump()));

  Json manifest;
  manifest["config_hash"] = hash_hex;
  manifest["seed"] = cfg.seed;
  Json stages = Json::object();

  // --- simulate ---
  SceneConfig scene_cfg = cfg.scene;
  scene_cfg.seed = derive_seed(cfg.seed, "simulate");
  const Scene scene(scene_cfg);
  const std::vector<FrameBundle> bundles = simulate(scene_cfg, cfg.threads);
  const std::size_t n = bundles.size();
  {
    std::vector<RadarFrame> frames;
    for (const FrameBundle& fb : bundles) frames.push_back(fb.radar);
    io::write_radar_jsonl(out / "radar.jsonl", frames);
    io::write_camera_json(out / "cam.json", scene_cfg.camera);
    io::write_scene_config(out / "scene.json", scene_cfg);  // lets `eval --gt` re-score this run
    stages["simulate"] = {{"status", "ok"}, {"frames", n}};
  }

  // --- ego-motion ---
  std::vector<EgoMotionEstimate> estimates(n);
  std::vector<std::vector<bool>> labels(n);
  {
    std::vector<io::EgoRecord> records;
    double inlier_ratio_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      RansacConfig rc = cfg.ransac;
      rc.seed = derive_seed(cfg.seed, "ego-motion", k + 1);
      estimates[k] = estimate_ego_velocity(bundles[k].radar, rc);
      labels[k] = classify_dynamic(bundles[k].radar, estimates[k], cfg.tau_dyn);
      inlier_ratio_sum += double(estimates[k].inlier_indices.size()) /
                          double(std::max<std::size_t>(1, bundles[k].radar.points.size()));
      records.push_back({bundles[k].timestamp, estimates[k]});
    }
    io::write_ego_jsonl(out / "ego.jsonl", records);
    io::write_labels_jsonl(out / "labels.jsonl", labels);
    stages["ego_motion"] = {{"status", "ok"},
                            {"mean_inlier_ratio", inlier_ratio_sum / double(n)}};
  }

  // --- segment ---
  std::vector<DynamicMask> masks(n);
  {
    std::size_t anchor_total = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto anchors = project_dynamic_rois(bundles[k].radar, labels[k], scene_cfg.camera,
                                                cfg.segmentation.patch_size,
                                                cfg.segmentation.max_anchors,
                                                derive_seed(cfg.seed, "segment", k + 1));
      std::vector<Roi> rois;
      rois.reserve(anchors.size());
      for (const auto& a : anchors) {
        rois.push_back(score_roi_geometric(bundles[k].radar, labels[k], scene_cfg.camera, a,
                                           cfg.segmentation.patch_size,
                                           cfg.segmentation.sigma_px));
      }
      anchor_total += anchors.size();
      masks[k] = composite_mask(rois, scene_cfg.camera.width, scene_cfg.camera.height,
                                cfg.segmentation.tau);
      io::write_mask_pgm(out / "masks" / indexed_name("mask", k, "pgm"), masks[k]);
    }
    stages["segment"] = {{"status", "ok"}, {"total_anchors", anchor_total}};
  }

  // --- scale ---
  std::vector<double> scales(n);
  std::vector<DepthImage> metric_depth(n);
  {
    Json per_frame = Json::array();
    for (std::size_t k = 0; k < n; ++k) {
      const auto samples =
          collect_scale_samples(bundles[k].depth_relative, scene_cfg.camera, bundles[k].radar,
                                labels[k], cfg.scale);
      scales[k] = vote_scale(samples, cfg.scale);
      metric_depth[k] = apply_scale(bundles[k].depth_relative, scales[k]);
      io::write_depth(out / indexed_name("scaled", k, "dpf"), metric_depth[k]);
      std::size_t static_count = 0;
      for (bool b : labels[k]) static_count += b ? 0 : 1;
      per_frame.push_back({{"scale", scales[k]},
                           {"samples", samples.size()},
                           {"acceptance_rate",
                            double(samples.size()) / double(std::max<std::size_t>(1, static_count))}});
    }
    const double aggregate = median(scales);
    io::save_json(out / "scale.json",
                  Json{{"frames", per_frame}, {"aggregate_scale", aggregate}});
    stages["scale"] = {{"status", "ok"}, {"aggregate_scale", aggregate}};
  }

  // --- lift-flow ---
  std::vector<std::vector<SceneFlowSample>> samples(n > 0 ? n - 1 : 0);
  std::vector<SceneFlowSample> pooled;
  {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const RigidTransform pose_i = bundles[k].radar.sensor_from_world.inverse();
      const RigidTransform pose_j = bundles[k + 1].radar.sensor_from_world.inverse();
      auto lifted = lift_scene_flow(*bundles[k].flow_to_next, metric_depth[k],
                                    metric_depth[k + 1], masks[k], scene_cfg.camera, pose_i,
                                    pose_j, bundles[k].timestamp, bundles[k + 1].timestamp,
                                    cfg.lift.stride);
      bool any_dynamic = false;
      for (bool b : labels[k]) any_dynamic |= b;
      if (any_dynamic && !lifted.empty()) {
        lifted = associate_radial_velocity(std::move(lifted), bundles[k].radar, labels[k], pose_i,
                                           estimates[k].velocity, cfg.lift.max_assoc_distance);
      }
      io::write_samples_jsonl(out / "samples" / indexed_name("pair", k, "jsonl"), lifted);
      pooled.insert(pooled.end(), lifted.begin(), lifted.end());
      samples[k] = std::move(lifted);
    }
    std::size_t with_vr = 0;
    for (const SceneFlowSample& s : pooled) with_vr += s.radial_velocity ? 1 : 0;
    stages["lift_flow"] = {{"status", "ok"},
                           {"samples", pooled.size()},
                           {"with_radial_velocity", with_vr}};
  }

  // --- fit-deform ---
  CouplingField trained;
  bool have_field = false;
  {
    if (!pooled.empty()) {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, "fit-deform");
      CouplingField field = CouplingField::init_for_samples(pooled, 6, tc.seed);
      FitResult result = fit(std::move(field), pooled, tc);
      trained = std::move(result.field);
      have_field = true;
      io::write_field_json(out / "field.json", trained);
      std::string csv = "iteration,loss\n";
      for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
        csv += std::to_string(i) + "," + Json(result.loss_history[i]).dump() + "\n";
      }
      io::save_text(out / "loss.csv", csv);
      stages["fit_deform"] = {{"status", "ok"},
                              {"iterations", tc.iterations},
                              {"final_loss", result.loss_history.empty()
                                                 ? Json(nullptr)
                                                 : Json(result.loss_history.back())}};
    } else {
      stages["fit_deform"] = {{"status", "skipped"}, {"reason", "no samples"}};
    }
  }

  // --- eval ---
  PipelinePredictions pred;
  for (const EgoMotionEstimate& e : estimates) pred.ego_velocities.push_back(e.velocity);
  pred.dyn_labels = labels;
  pred.masks = masks;
  pred.scales = scales;
  pred.flow_samples = samples;
  pred.field = have_field ? &trained : nullptr;
  const MetricsReport metrics = evaluate(scene, bundles, pred, cfg.lift.stride);
  const Json metrics_json = io::metrics_to_json(metrics);
  io::save_json(out / "report.json", metrics_json);
  io::save_text(out / "report.csv", io::metrics_to_csv(metrics));
  stages["eval"] = {{"status", "ok"}, {"metrics", metrics_json}};

  manifest["stages"] = std::move(stages);
  PipelineResult result;
  result.manifest = manifest.dump(2) + "\n";
  result.metrics = metrics;
  io::save_text(out / "manifest.json", result.manifest);
  return result;
}

}  // namespace radarflow
