#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "radarflow/flow_lift.hpp"
#include "radarflow/simulator.hpp"

using namespace radarflow;

namespace {

// Small static scene: stationary ego, ground plane, one box ahead.
SceneConfig static_scene() {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.duration = 0.5;
  cfg.ego_segments = {EgoSegment{1.0, 0.0, 0.0}};
  cfg.dynamic_boxes.clear();
  cfg.static_boxes = {{{15.0, 0.0, 1.0}, {2.0, 2.0, 1.0}}};
  cfg.radar.sigma_p = 0.0;
  cfg.radar.sigma_v = 0.0;
  cfg.radar.points_per_frame = 150;
  cfg.camera.width = 96;
  cfg.camera.height = 54;
  cfg.camera.cx = 48.0;
  cfg.camera.cy = 27.0;
  cfg.camera.fx = cfg.camera.fy = 120.0;
  return cfg;
}

}  // namespace

TEST_CASE("static scene with stationary ego has exactly zero radial velocities") {
  const auto bundles = simulate(static_scene());
  CHECK(bundles.size() == 5);
  std::size_t points = 0;
  for (const FrameBundle& fb : bundles) {
    for (const RadarPoint& p : fb.radar.points) {
      CHECK(p.radial_velocity == 0.0);
      ++points;
    }
    for (bool dyn : fb.dyn_labels_gt) CHECK(!dyn);
  }
  CHECK(points > 100);
}

TEST_CASE("an object approaching a stationary sensor head-on has negative radial velocity") {
  SceneConfig cfg = static_scene();
  cfg.static_boxes.clear();
  cfg.radar.points_per_frame = 500;
  cfg.dynamic_boxes = {{{25.0, 0.0, 1.2}, {3.0, 3.0, 1.2}, {-5.0, 0.0, 0.0}}};
  const auto bundles = simulate(cfg);
  std::size_t dynamic_points = 0;
  for (const FrameBundle& fb : bundles) {
    for (std::size_t i = 0; i < fb.radar.points.size(); ++i) {
      if (!fb.dyn_labels_gt[i]) continue;
      ++dynamic_points;
      // Head-on approach: range decreasing, v_r close to -5 (exactly -5 on axis).
      CHECK(fb.radar.points[i].radial_velocity < -4.9);
      CHECK(fb.radar.points[i].radial_velocity >= -5.0 - 1e-9);
    }
  }
  CHECK(dynamic_points > 50);
}

TEST_CASE("static points satisfy v_r + d . v_ego == 0 exactly when noise-free") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.duration = 1.0;
  cfg.radar.sigma_p = 0.0;
  cfg.radar.sigma_v = 0.0;
  cfg.camera.width = 64;
  cfg.camera.height = 36;
  cfg.camera.cx = 32;
  cfg.camera.cy = 18;
  const auto bundles = simulate(cfg);
  std::size_t checked = 0;
  for (const FrameBundle& fb : bundles) {
    for (std::size_t i = 0; i < fb.radar.points.size(); ++i) {
      if (fb.dyn_labels_gt[i]) continue;
      const Vec3 d = fb.radar.points[i].position.normalized();
      const double residual = fb.radar.points[i].radial_velocity + d.dot(fb.ego_velocity_sensor);
      CHECK(std::abs(residual) <= 1e-12);
      ++checked;
    }
  }
  CHECK(checked > 200);
}

TEST_CASE("depth at a radar point's projection matches the point's camera depth") {
  // Independent cross-check between the radar sampler (rays from the radar
  // origin) and the camera ray caster: cast the camera ray through the
  // radar point's exact projection and compare z-depths.
  SceneConfig cfg = static_scene();
  cfg.ego_segments = {EgoSegment{1.0, 3.0, 0.1}};  // moving, turning ego
  const Scene scene(cfg);
  const auto bundles = simulate(cfg);
  std::size_t checked = 0, occluded = 0;
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    const FrameBundle& fb = bundles[k];
    const RigidTransform world_from_cam = fb.ego_pose * cfg.camera.cam_from_ego.inverse();
    for (const RadarPoint& p : fb.radar.points) {
      const Vec3 p_cam = cfg.camera.cam_from_ego * p.position;
      if (p_cam.z() <= 1e-6) continue;
      const Vec2 uv = project(cfg.camera, p_cam);
      if (!cfg.camera.contains(uv.x(), uv.y())) continue;
      const Vec3 dir_cam((uv.x() - cfg.camera.cx) / cfg.camera.fx,
                         (uv.y() - cfg.camera.cy) / cfg.camera.fy, 1.0);
      const double dir_norm = dir_cam.norm();
      const auto hit =
          scene.raycast(world_from_cam.translation,
                        (world_from_cam.rotation * dir_cam) / dir_norm, fb.timestamp);
      REQUIRE(hit.has_value());
      const double cam_depth = hit->range / dir_norm;
      if (cam_depth < p_cam.z() - 1e-6) {
        ++occluded;  // the camera sees a nearer surface; parallax, not an error
        continue;
      }
      CHECK(std::abs(cam_depth - p_cam.z()) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(occluded < checked);
}

TEST_CASE("simulate is bitwise deterministic and thread-count independent") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.duration = 0.8;
  cfg.camera.width = 64;
  cfg.camera.height = 36;
  cfg.camera.cx = 32;
  cfg.camera.cy = 18;
  const auto a = simulate(cfg, 1);
  const auto b = simulate(cfg, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a[k].radar.points.size() == b[k].radar.points.size());
    for (std::size_t i = 0; i < a[k].radar.points.size(); ++i) {
      CHECK(a[k].radar.points[i].position == b[k].radar.points[i].position);
      CHECK(a[k].radar.points[i].radial_velocity == b[k].radar.points[i].radial_velocity);
    }
    CHECK(a[k].depth_metric.data == b[k].depth_metric.data);
    CHECK(a[k].flow_to_next.has_value() == b[k].flow_to_next.has_value());
    if (a[k].flow_to_next) CHECK(a[k].flow_to_next->data == b[k].flow_to_next->data);
    CHECK(a[k].mask_gt.data == b[k].mask_gt.data);
  }
}

TEST_CASE("relative depth times the scale factor reproduces metric depth exactly") {
  SceneConfig cfg = static_scene();
  cfg.relative_depth_scale = 3.0;
  const auto bundles = simulate(cfg);
  for (const FrameBundle& fb : bundles) {
    for (std::size_t i = 0; i < fb.depth_metric.data.size(); ++i) {
      CHECK(fb.depth_relative.data[i] == fb.depth_metric.data[i] / 3.0);
    }
  }
}

TEST_CASE("consistency triangle: lifting simulator flow and depth recovers the rigid motion") {
  // Stationary ego, fronto-parallel box face moving laterally: z-depth on the
  // face is constant, so the bilinear depth lookup at the flow target is
  // exact and the lifted motion must match the ground truth to 1e-6.
  SceneConfig cfg = static_scene();
  cfg.static_boxes.clear();
  const Vec3 v_obj(0.0, 1.0, 0.0);
  cfg.dynamic_boxes = {{{12.0, -1.0, 1.2}, {1.5, 3.0, 1.2}, v_obj}};
  const auto bundles = simulate(cfg);
  const double dt = 1.0 / cfg.frame_rate;

  const FrameBundle& f0 = bundles[0];
  const FrameBundle& f1 = bundles[1];
  REQUIRE(f0.flow_to_next.has_value());
  const auto samples = lift_scene_flow(*f0.flow_to_next, f0.depth_metric, f1.depth_metric,
                                       f0.mask_gt, cfg.camera, f0.ego_pose, f1.ego_pose,
                                       f0.timestamp, f1.timestamp, 2);
  CHECK(samples.size() > 100);
  std::size_t exact = 0;
  for (const SceneFlowSample& s : samples) {
    const Vec3 motion = s.T_j_to_i * s.x_tj - s.x_ti;
    // Samples whose flow target slips off the face edge onto the background
    // are dropped by the depth-validity rule, so everything left is exact.
    if ((motion - v_obj * dt).norm() <= 1e-6) ++exact;
  }
  CHECK(exact == samples.size());
}

TEST_CASE("exact_scene_flow_samples carry exact correspondences and radial rates") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.duration = 0.5;
  cfg.camera.width = 160;
  cfg.camera.height = 90;
  cfg.camera.cx = 80;
  cfg.camera.cy = 45;
  const Scene scene(cfg);
  const auto samples = exact_scene_flow_samples(scene, 0, 2);
  CHECK(samples.size() > 20);
  for (const SceneFlowSample& s : samples) {
    REQUIRE(s.radial_velocity.has_value());
    // The stored pair satisfies the radial identity exactly (criterion of
    // the radial loss with ground-truth flow).
    CHECK(std::abs(rad_residual(s, s.x_tj)) <= 1e-8);
  }
}

TEST_CASE("evaluate scores ground truth as perfect") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.duration = 0.5;
  cfg.camera.width = 96;
  cfg.camera.height = 54;
  cfg.camera.cx = 48;
  cfg.camera.cy = 27;
  const Scene scene(cfg);
  const auto bundles = simulate(cfg);

  PipelinePredictions pred;
  for (const FrameBundle& fb : bundles) {
    pred.ego_velocities.push_back(fb.ego_velocity_sensor);
    pred.dyn_labels.push_back(fb.dyn_labels_gt);
    pred.masks.push_back(fb.mask_gt);
    pred.scales.push_back(cfg.relative_depth_scale);
  }
  for (std::size_t k = 0; k + 1 < bundles.size(); ++k) {
    pred.flow_samples.push_back(exact_scene_flow_samples(scene, k, 4));
  }

  const MetricsReport report = evaluate(scene, bundles, pred);
  CHECK(*report.ego_rmse <= 1e-12);
  CHECK(*report.label_f1 == 1.0);
  CHECK(*report.label_precision == 1.0);
  CHECK(*report.label_recall == 1.0);
  CHECK(*report.mask_iou == 1.0);
  CHECK(*report.scale_rel_error == 0.0);
  CHECK(*report.flow_epe <= 1e-9);

  // All-static predictions on a dynamic scene: recall 0.
  PipelinePredictions all_static = pred;
  for (auto& frame : all_static.dyn_labels) {
    std::fill(frame.begin(), frame.end(), false);
  }
  all_static.flow_samples.clear();
  const MetricsReport r2 = evaluate(scene, bundles, all_static);
  CHECK(*r2.label_recall == 0.0);

  // Length mismatches are errors.
  PipelinePredictions bad = pred;
  bad.ego_velocities.pop_back();
  CHECK_THROWS_AS(evaluate(scene, bundles, bad), Error);
}

TEST_CASE("invalid configs are rejected") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.frame_rate = 0.0;
  CHECK_THROWS_AS(Scene{cfg}, Error);
  cfg = SceneConfig::default_test_scene();
  cfg.radar.sigma_v = -1.0;
  CHECK_THROWS_AS(Scene{cfg}, Error);
  cfg = SceneConfig::default_test_scene();
  cfg.dynamic_boxes[0].half_extents = Vec3(1, -1, 1);
  CHECK_THROWS_AS(Scene{cfg}, Error);
}
