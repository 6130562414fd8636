#include "radarflow/flow_lift.hpp"

#include <cmath>
#include <limits>

namespace radarflow {

std::vector<SceneFlowSample> lift_scene_flow(const FlowImage& flow, const DepthImage& depth_i,
                                             const DepthImage& depth_j, const DynamicMask& mask_i,
                                             const CameraModel& cam, const RigidTransform& pose_i,
                                             const RigidTransform& pose_j, double t_i, double t_j,
                                             std::uint32_t stride) {
  const std::uint32_t w = cam.width, h = cam.height;
  if (flow.width != w || flow.height != h || depth_i.width != w || depth_i.height != h ||
      depth_j.width != w || depth_j.height != h || mask_i.width != w || mask_i.height != h) {
    throw Error(ErrorCode::DimensionMismatch, "flow/depth/mask dimensions differ from camera");
  }
  if (depth_i.scale_state != ScaleState::Metric || depth_j.scale_state != ScaleState::Metric) {
    throw Error(ErrorCode::ScaleStateMismatch, "lift_scene_flow expects metric depth");
  }
  if (stride == 0) {
    throw Error(ErrorCode::InvalidConfig, "stride must be >= 1");
  }

  const RigidTransform ego_from_cam = cam.cam_from_ego.inverse();
  const RigidTransform T_j_to_i = pose_i.inverse() * pose_j;

  std::vector<SceneFlowSample> samples;
  for (std::uint32_t v = 0; v < h; v += stride) {
    for (std::uint32_t u = 0; u < w; u += stride) {
      if (!mask_i.at(u, v)) continue;
      const double di = depth_i.at(u, v);
      if (di <= 0.0) continue;

      const double tu = double(u) + flow.du(u, v);
      const double tv = double(v) + flow.dv(u, v);
      const std::optional<double> dj = sample_depth_bilinear(depth_j, tu, tv);
      if (!dj) continue;

      SceneFlowSample s;
      s.x_ti = ego_from_cam * back_project(cam, u, v, di);
      s.x_tj = ego_from_cam * back_project(cam, tu, tv, *dj);
      s.t_i = t_i;
      s.t_j = t_j;
      s.T_j_to_i = T_j_to_i;
      s.src_u = std::int32_t(u);
      s.src_v = std::int32_t(v);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::vector<SceneFlowSample> associate_radial_velocity(
    std::vector<SceneFlowSample> samples, const RadarFrame& frame_i,
    const std::vector<bool>& dyn_labels, const RigidTransform& ego_pose_i,
    const std::optional<Vec3>& ego_velocity, double max_distance) {
  if (dyn_labels.size() != frame_i.points.size()) {
    throw Error(ErrorCode::LengthMismatch, "dyn_labels size != point count");
  }

  // Dynamic radar points in frame-i ego coordinates. The sensor frame is the
  // ego frame, so ego_from_sensor is computed from the two poses (identity
  // under the project convention, but kept general).
  const RigidTransform ego_from_sensor = ego_pose_i.inverse() * frame_i.sensor_from_world.inverse();
  std::vector<std::uint32_t> dyn_idx;
  std::vector<Vec3> dyn_pos;
  for (std::size_t i = 0; i < frame_i.points.size(); ++i) {
    if (!dyn_labels[i]) continue;
    dyn_idx.push_back(std::uint32_t(i));
    dyn_pos.push_back(ego_from_sensor * frame_i.points[i].position);
  }
  if (dyn_idx.empty()) {
    throw Error(ErrorCode::NoDynamicRadarPoints, "frame has no dynamic radar points");
  }

  const Vec3 radar_origin = ego_from_sensor.translation;

  for (SceneFlowSample& s : samples) {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t k = 0; k < dyn_pos.size(); ++k) {
      const double d2 = (dyn_pos[k] - s.x_ti).squaredNorm();
      if (d2 < best_d2) {  // strict keeps the lowest index on ties
        best_d2 = d2;
        best = k;
      }
    }
    s.radar_origin = radar_origin;
    if (best_d2 > max_distance * max_distance) {
      s.radial_velocity.reset();
      continue;
    }
    double vr = frame_i.points[dyn_idx[best]].radial_velocity;
    if (ego_velocity) {
      const Vec3 d = frame_i.points[dyn_idx[best]].position.normalized();
      vr += d.dot(*ego_velocity);
    }
    s.radial_velocity = vr;
  }
  return samples;
}

}  // namespace radarflow
