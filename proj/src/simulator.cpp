#include "radarflow/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <thread>

#include "radarflow/rng.hpp"

namespace radarflow {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mat3 yaw_rotation(double heading) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(heading), s = std::sin(heading);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

std::optional<double> ray_aabb(const Vec3& origin, const Vec3& dir, const Vec3& lo,
                               const Vec3& hi) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir(a)) < 1e-12) {
      if (origin(a) < lo(a) || origin(a) > hi(a)) return std::nullopt;
      continue;
    }
    double s0 = (lo(a) - origin(a)) / dir(a);
    double s1 = (hi(a) - origin(a)) / dir(a);
    if (s0 > s1) std::swap(s0, s1);
    t_enter = std::max(t_enter, s0);
    t_exit = std::min(t_exit, s1);
  }
  if (t_enter > t_exit || t_enter <= 1e-9) return std::nullopt;
  return t_enter;
}

void run_parallel(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const unsigned used = std::min<unsigned>(threads, unsigned(n));
  std::atomic<std::size_t> next{0};
  for (unsigned t = 0; t < used; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

SceneConfig SceneConfig::default_test_scene() {
  SceneConfig cfg;
  cfg.duration = 5.0;
  cfg.frame_rate = 10.0;
  cfg.ego_height = 0.9;
  cfg.ego_segments = {EgoSegment{5.0, 8.0, 0.0}};
  cfg.ground_plane = true;
  cfg.static_boxes = {
      {{15.0, 6.0, 1.0}, {2.2, 0.9, 1.0}},
      {{30.0, -6.0, 1.5}, {1.0, 1.0, 1.5}},
      {{52.0, 7.0, 2.0}, {3.0, 1.0, 2.0}},
      {{72.0, -7.5, 2.0}, {2.0, 2.0, 2.0}},
      {{88.0, 6.5, 1.2}, {2.2, 0.9, 1.2}},
  };
  cfg.dynamic_boxes = {
      // leading: same lane, slower than the ego
      {{22.0, 0.2, 0.75}, {2.2, 0.9, 0.75}, {6.0, 0.0, 0.0}},
      // oncoming: opposite lane
      {{60.0, -3.5, 0.8}, {2.2, 0.9, 0.8}, {-9.0, 0.0, 0.0}},
      // diagonal crossing from the left
      {{65.0, 16.0, 0.75}, {2.0, 1.0, 0.75}, {-4.0, -4.0, 0.0}},
  };
  cfg.radar = RadarModel{};
  cfg.camera.fx = cfg.camera.fy = 400.0;
  cfg.camera.cx = 160.0;
  cfg.camera.cy = 90.0;
  cfg.camera.width = 320;
  cfg.camera.height = 180;
  // Camera 1.2 m ahead of and 0.5 m above the ego origin, optical axis along
  // ego +x: camera x = -ego y, camera y = -ego z, camera z = ego x.
  Mat3 r_ce;
  r_ce << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  const Vec3 cam_in_ego(1.2, 0.0, 0.5);
  cfg.camera.cam_from_ego = {r_ce, -(r_ce * cam_in_ego)};
  cfg.relative_depth_scale = 3.0;
  cfg.seed = 7;
  return cfg;
}

Scene::Scene(SceneConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.frame_rate > 0.0) || !(cfg_.duration > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "duration and frame_rate must be > 0");
  }
  if (cfg_.ego_segments.empty()) {
    throw Error(ErrorCode::InvalidConfig, "at least one ego segment required");
  }
  if (cfg_.radar.sigma_p < 0.0 || cfg_.radar.sigma_v < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "noise sigmas must be >= 0");
  }
  if (!(cfg_.camera.fx > 0.0) || !(cfg_.camera.fy > 0.0) || cfg_.camera.width == 0 ||
      cfg_.camera.height == 0) {
    throw Error(ErrorCode::InvalidConfig, "camera intrinsics invalid");
  }
  if (!(cfg_.relative_depth_scale > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "relative_depth_scale must be > 0");
  }
  for (const auto& b : cfg_.static_boxes) {
    if ((b.half_extents.array() <= 0.0).any()) {
      throw Error(ErrorCode::InvalidConfig, "static box extents must be positive");
    }
  }
  for (const auto& b : cfg_.dynamic_boxes) {
    if ((b.half_extents.array() <= 0.0).any()) {
      throw Error(ErrorCode::InvalidConfig, "dynamic box extents must be positive");
    }
  }

  frame_count_ = std::size_t(std::llround(cfg_.duration * cfg_.frame_rate));
  if (frame_count_ == 0) frame_count_ = 1;

  double t0 = 0.0, x = 0.0, y = 0.0, heading = 0.0;
  for (const EgoSegment& seg : cfg_.ego_segments) {
    if (seg.duration < 0.0) {
      throw Error(ErrorCode::InvalidConfig, "ego segment duration must be >= 0");
    }
    segs_.push_back({t0, x, y, heading, seg.speed, seg.yaw_rate, seg.duration});
    const double tau = seg.duration;
    if (std::abs(seg.yaw_rate) < 1e-12) {
      x += seg.speed * tau * std::cos(heading);
      y += seg.speed * tau * std::sin(heading);
    } else {
      const double h1 = heading + seg.yaw_rate * tau;
      x += seg.speed / seg.yaw_rate * (std::sin(h1) - std::sin(heading));
      y += -seg.speed / seg.yaw_rate * (std::cos(h1) - std::cos(heading));
      heading = h1;
    }
    t0 += tau;
  }
}

RigidTransform Scene::ego_pose(double t) const {
  const SegState* seg = &segs_.back();
  for (const SegState& s : segs_) {
    if (t < s.t0 + s.duration) {
      seg = &s;
      break;
    }
  }
  const double tau = std::max(0.0, t - seg->t0);
  double x, y, heading;
  if (std::abs(seg->yaw_rate) < 1e-12) {
    heading = seg->heading;
    x = seg->x + seg->speed * tau * std::cos(heading);
    y = seg->y + seg->speed * tau * std::sin(heading);
  } else {
    heading = seg->heading + seg->yaw_rate * tau;
    x = seg->x + seg->speed / seg->yaw_rate * (std::sin(heading) - std::sin(seg->heading));
    y = seg->y - seg->speed / seg->yaw_rate * (std::cos(heading) - std::cos(seg->heading));
  }
  return {yaw_rotation(heading), Vec3(x, y, cfg_.ego_height)};
}

Vec3 Scene::ego_velocity_world(double t) const {
  const SegState* seg = &segs_.back();
  for (const SegState& s : segs_) {
    if (t < s.t0 + s.duration) {
      seg = &s;
      break;
    }
  }
  const double tau = std::max(0.0, t - seg->t0);
  const double heading = seg->heading + seg->yaw_rate * tau;
  return {seg->speed * std::cos(heading), seg->speed * std::sin(heading), 0.0};
}

std::optional<Scene::Hit> Scene::raycast(const Vec3& origin, const Vec3& dir, double t) const {
  std::optional<Hit> best;

  if (cfg_.ground_plane && dir.z() < -1e-12) {
    const double s = -origin.z() / dir.z();
    if (s > 1e-9) {
      best = Hit{s, origin + s * dir, Vec3::Zero(), false, -1};
    }
  }

  for (const BoxSpec& b : cfg_.static_boxes) {
    const auto s = ray_aabb(origin, dir, b.center - b.half_extents, b.center + b.half_extents);
    if (s && (!best || *s < best->range)) {
      best = Hit{*s, origin + *s * dir, Vec3::Zero(), false, -1};
    }
  }
  for (std::size_t i = 0; i < cfg_.dynamic_boxes.size(); ++i) {
    const DynamicBoxSpec& b = cfg_.dynamic_boxes[i];
    const Vec3 c = b.center0 + b.velocity * t;
    const auto s = ray_aabb(origin, dir, c - b.half_extents, c + b.half_extents);
    if (s && (!best || *s < best->range)) {
      best = Hit{*s, origin + *s * dir, b.velocity, true, std::int32_t(i)};
    }
  }
  return best;
}

FrameBundle Scene::make_frame(std::size_t k) const {
  const double t = frame_time(k);
  const double dt = 1.0 / cfg_.frame_rate;
  const std::uint32_t w = cfg_.camera.width, h = cfg_.camera.height;

  FrameBundle fb;
  fb.timestamp = t;
  fb.ego_pose = ego_pose(t);
  const Mat3& r_we = fb.ego_pose.rotation;
  const Vec3& ego_pos = fb.ego_pose.translation;
  const Vec3 ego_vel_world = ego_velocity_world(t);
  fb.ego_velocity_sensor = r_we.transpose() * ego_vel_world;

  fb.radar.timestamp = t;
  fb.radar.sensor_from_world = fb.ego_pose.inverse();

  for (const DynamicBoxSpec& b : cfg_.dynamic_boxes) {
    fb.object_centers.push_back(b.center0 + b.velocity * t);
  }

  // Radar returns: directions uniform over the FOV rectangle, first hit kept.
  {
    SplitMix64 rng(derive_seed(cfg_.seed, "radar-frame", k + 1));
    const double half_az = 0.5 * cfg_.radar.azimuth_fov_deg * kDeg;
    const double half_el = 0.5 * cfg_.radar.elevation_fov_deg * kDeg;
    const std::uint64_t max_attempts = std::uint64_t(cfg_.radar.points_per_frame) * 40 + 100;
    std::uint64_t attempts = 0;
    while (fb.radar.points.size() < cfg_.radar.points_per_frame && attempts < max_attempts) {
      ++attempts;
      const double az = rng.uniform(-half_az, half_az);
      const double el = rng.uniform(-half_el, half_el);
      const Vec3 d_sensor(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = raycast(ego_pos, r_we * d_sensor, t);
      if (!hit || hit->range > cfg_.radar.max_range || hit->range < 0.2) continue;

      RadarPoint p;
      p.position = hit->range * d_sensor;
      if (cfg_.radar.sigma_p > 0.0) {
        p.position += cfg_.radar.sigma_p * Vec3(rng.normal(), rng.normal(), rng.normal());
      }
      if (p.position.norm() <= 0.11) continue;
      const Vec3 u_world = (hit->point - ego_pos).normalized();
      p.radial_velocity = u_world.dot(hit->velocity - ego_vel_world);
      if (cfg_.radar.sigma_v > 0.0) p.radial_velocity += cfg_.radar.sigma_v * rng.normal();

      fb.radar.points.push_back(p);
      fb.dyn_labels_gt.push_back(hit->dynamic);
    }
  }

  // Depth, mask and flow share one ray cast per pixel.
  fb.depth_metric = DepthImage::zeros(w, h, ScaleState::Metric);
  fb.mask_gt = DynamicMask::zeros(w, h);
  const bool has_next = k + 1 < frame_count_;
  if (has_next) fb.flow_to_next = FlowImage::zeros(w, h);

  const RigidTransform world_from_cam = fb.ego_pose * cfg_.camera.cam_from_ego.inverse();
  const RigidTransform cam_from_world_next =
      has_next ? (cfg_.camera.cam_from_ego * ego_pose(t + dt).inverse()) : RigidTransform{};
  const Vec3 cam_origin = world_from_cam.translation;

  for (std::uint32_t v = 0; v < h; ++v) {
    for (std::uint32_t u = 0; u < w; ++u) {
      const Vec3 dir_cam((double(u) - cfg_.camera.cx) / cfg_.camera.fx,
                         (double(v) - cfg_.camera.cy) / cfg_.camera.fy, 1.0);
      const double dir_norm = dir_cam.norm();
      const Vec3 dir_world = (world_from_cam.rotation * dir_cam) / dir_norm;
      const auto hit = raycast(cam_origin, dir_world, t);
      if (!hit) continue;
      fb.depth_metric.at(u, v) = hit->range / dir_norm;  // z-depth along the pixel ray
      if (hit->dynamic) fb.mask_gt.at(u, v) = 1;
      if (has_next) {
        const Vec3 moved = hit->point + hit->velocity * dt;
        const Vec3 p_cam_next = cam_from_world_next * moved;
        if (p_cam_next.z() > 1e-6) {
          const Vec2 uv = project(cfg_.camera, p_cam_next);
          fb.flow_to_next->set(u, v, uv.x() - double(u), uv.y() - double(v));
        } else {
          fb.flow_to_next->set(u, v, 1e9, 1e9);  // finite sentinel, always off-image
        }
      }
    }
  }

  fb.depth_relative = fb.depth_metric;
  for (double& d : fb.depth_relative.data) d /= cfg_.relative_depth_scale;
  fb.depth_relative.scale_state = ScaleState::Relative;
  return fb;
}

std::vector<FrameBundle> simulate(const SceneConfig& cfg, unsigned threads) {
  const Scene scene(cfg);
  std::vector<FrameBundle> bundles(scene.frame_count());
  run_parallel(scene.frame_count(), threads,
               [&](std::size_t k) { bundles[k] = scene.make_frame(k); });
  return bundles;
}

std::vector<SceneFlowSample> exact_scene_flow_samples(const Scene& scene, std::size_t frame_i,
                                                      std::uint32_t stride) {
  if (frame_i + 1 >= scene.frame_count()) {
    throw Error(ErrorCode::OutOfBounds, "frame_i must have a successor");
  }
  if (stride == 0) {
    throw Error(ErrorCode::InvalidConfig, "stride must be >= 1");
  }
  const SceneConfig& cfg = scene.config();
  const double t_i = scene.frame_time(frame_i);
  const double t_j = scene.frame_time(frame_i + 1);
  const double dt = t_j - t_i;

  const RigidTransform pose_i = scene.ego_pose(t_i);
  const RigidTransform pose_j = scene.ego_pose(t_j);
  const RigidTransform ego_i_from_world = pose_i.inverse();
  const RigidTransform ego_j_from_world = pose_j.inverse();
  const RigidTransform world_from_cam = pose_i * cfg.camera.cam_from_ego.inverse();
  const Vec3 cam_origin = world_from_cam.translation;
  const Vec3 sensor_origin = pose_i.translation;  // radar == ego origin

  std::vector<SceneFlowSample> samples;
  for (std::uint32_t v = 0; v < cfg.camera.height; v += stride) {
    for (std::uint32_t u = 0; u < cfg.camera.width; u += stride) {
      const Vec3 dir_cam((double(u) - cfg.camera.cx) / cfg.camera.fx,
                         (double(v) - cfg.camera.cy) / cfg.camera.fy, 1.0);
      const Vec3 dir_world = (world_from_cam.rotation * dir_cam).normalized();
      const auto hit = scene.raycast(cam_origin, dir_world, t_i);
      if (!hit || !hit->dynamic) continue;

      SceneFlowSample s;
      s.x_ti = ego_i_from_world * hit->point;
      s.x_tj = ego_j_from_world * (hit->point + hit->velocity * dt);
      s.t_i = t_i;
      s.t_j = t_j;
      s.T_j_to_i = ego_i_from_world * pose_j;
      s.radar_origin = Vec3::Zero();
      const Vec3 u_world = (hit->point - sensor_origin).normalized();
      s.radial_velocity = u_world.dot(hit->velocity);  // exact, ego-motion compensated
      s.src_u = std::int32_t(u);
      s.src_v = std::int32_t(v);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

namespace {

struct LabelCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

}  // namespace

MetricsReport evaluate(const Scene& scene, const std::vector<FrameBundle>& truth,
                       const PipelinePredictions& pred, std::uint32_t eval_stride) {
  MetricsReport report;
  const std::size_t n = truth.size();

  if (!pred.ego_velocities.empty()) {
    if (pred.ego_velocities.size() != n) {
      throw Error(ErrorCode::LengthMismatch, "ego velocity count != frame count");
    }
    double sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sq += (pred.ego_velocities[k] - truth[k].ego_velocity_sensor).squaredNorm();
    }
    report.ego_rmse = std::sqrt(sq / double(n));
  }

  if (!pred.dyn_labels.empty()) {
    if (pred.dyn_labels.size() != n) {
      throw Error(ErrorCode::LengthMismatch, "label frame count != frame count");
    }
    LabelCounts c;
    for (std::size_t k = 0; k < n; ++k) {
      if (pred.dyn_labels[k].size() != truth[k].dyn_labels_gt.size()) {
        throw Error(ErrorCode::LengthMismatch, "label count != point count in frame " +
                                                   std::to_string(k));
      }
      for (std::size_t i = 0; i < pred.dyn_labels[k].size(); ++i) {
        const bool p = pred.dyn_labels[k][i], g = truth[k].dyn_labels_gt[i];
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
      }
    }
    const double prec = c.tp + c.fp == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fp);
    const double rec = c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
    report.label_precision = prec;
    report.label_recall = rec;
    report.label_f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
  }

  if (!pred.masks.empty()) {
    if (pred.masks.size() != n) {
      throw Error(ErrorCode::LengthMismatch, "mask count != frame count");
    }
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const DynamicMask& a = pred.masks[k];
      const DynamicMask& b = truth[k].mask_gt;
      if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::DimensionMismatch, "mask dimensions differ in frame " +
                                                      std::to_string(k));
      }
      for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] && b.data[i];
        uni += a.data[i] || b.data[i];
      }
    }
    report.mask_iou = uni == 0 ? 1.0 : double(inter) / double(uni);
  }

  if (!pred.scales.empty()) {
    const double s_gt = scene.config().relative_depth_scale;
    double err = 0.0;
    for (double s : pred.scales) err += std::abs(s - s_gt) / s_gt;
    report.scale_rel_error = err / double(pred.scales.size());
  }

  if (!pred.flow_samples.empty()) {
    if (pred.flow_samples.size() + 1 != n) {
      throw Error(ErrorCode::LengthMismatch, "flow sample pair count != frame count - 1");
    }
    // Pair predicted samples with the exact correspondence at the same source
    // pixel; pixels whose true surface is static are skipped.
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double t_i = scene.frame_time(k);
      const double t_j = scene.frame_time(k + 1);
      const double dt = t_j - t_i;
      const RigidTransform pose_i = scene.ego_pose(t_i);
      const RigidTransform pose_j = scene.ego_pose(t_j);
      const RigidTransform ego_i_from_world = pose_i.inverse();
      const RigidTransform ego_j_from_world = pose_j.inverse();
      const RigidTransform T_j_to_i = ego_i_from_world * pose_j;
      const RigidTransform world_from_cam = pose_i * scene.config().camera.cam_from_ego.inverse();
      for (const SceneFlowSample& s : pred.flow_samples[k]) {
        if (s.src_u < 0 || s.src_v < 0) continue;
        const Vec3 dir_cam((double(s.src_u) - scene.config().camera.cx) / scene.config().camera.fx,
                           (double(s.src_v) - scene.config().camera.cy) / scene.config().camera.fy,
                           1.0);
        const Vec3 dir_world = (world_from_cam.rotation * dir_cam).normalized();
        const auto hit = scene.raycast(world_from_cam.translation, dir_world, t_i);
        if (!hit || !hit->dynamic) continue;
        const Vec3 x_ti_gt = ego_i_from_world * hit->point;
        const Vec3 x_tj_gt = ego_j_from_world * (hit->point + hit->velocity * dt);
        const Vec3 f_gt = T_j_to_i * x_tj_gt - x_ti_gt;
        const Vec3 f_pred = s.T_j_to_i * s.x_tj - s.x_ti;
        sum += (f_pred - f_gt).norm();
        ++count;
      }
    }
    if (count > 0) report.flow_epe = sum / double(count);
  }

  if (pred.field != nullptr && n >= 2) {
    double warp_sum = 0.0, rad_sum = 0.0, rad_max = 0.0;
    std::size_t warp_count = 0, rad_count = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      for (const SceneFlowSample& s : exact_scene_flow_samples(scene, k, eval_stride)) {
        const Vec3 y_hat = pred.field->warp(s.x_ti, pred.field->normalize_time(s.t_i),
                                            pred.field->normalize_time(s.t_j));
        warp_sum += (y_hat - s.x_tj).norm();
        ++warp_count;
        const double r = std::abs(rad_residual(s, y_hat));
        rad_sum += r;
        rad_max = std::max(rad_max, r);
        ++rad_count;
      }
    }
    if (warp_count > 0) {
      report.warp_epe = warp_sum / double(warp_count);
      report.rad_abs_mean = rad_sum / double(rad_count);
      report.rad_abs_max = rad_max;
    }
  }

  return report;
}

}  // namespace radarflow
