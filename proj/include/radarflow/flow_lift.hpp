#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "radarflow/core.hpp"
#include "radarflow/segmentation.hpp"

namespace radarflow {

/// Dense 2D optical flow, pixels. data holds (du, dv) interleaved, row-major.
struct FlowImage {
  std::uint32_t width = 0, height = 0;
  std::vector<double> data;

  static FlowImage zeros(std::uint32_t w, std::uint32_t h) {
    return {w, h, std::vector<double>(2 * std::size_t(w) * h, 0.0)};
  }
  double du(std::uint32_t u, std::uint32_t v) const {
    return data[2 * (std::size_t(v) * width + u)];
  }
  double dv(std::uint32_t u, std::uint32_t v) const {
    return data[2 * (std::size_t(v) * width + u) + 1];
  }
  void set(std::uint32_t u, std::uint32_t v, double fu, double fv) {
    data[2 * (std::size_t(v) * width + u)] = fu;
    data[2 * (std::size_t(v) * width + u) + 1] = fv;
  }
};

/// One dynamic 3D correspondence between two frames.
///
/// x_ti lives in ego coordinates at t_i, x_tj in ego coordinates at t_j;
/// T_j_to_i maps frame-t_j ego coordinates into frame-t_i ego coordinates.
/// radial_velocity, when set, is the ego-motion-compensated radial rate
/// inherited from the nearest dynamic radar point.
struct SceneFlowSample {
  Vec3 x_ti = Vec3::Zero();
  Vec3 x_tj = Vec3::Zero();
  double t_i = 0.0, t_j = 0.0;  // seconds
  Vec3 radar_origin = Vec3::Zero();  // radar center at t_i, frame-t_i ego coords
  std::optional<double> radial_velocity;  // m/s
  RigidTransform T_j_to_i;
  std::int32_t src_u = -1, src_v = -1;  // source pixel, -1 when synthetic
};

/// Lift dynamic mask pixels to 3D correspondences using flow and a metric
/// depth pair. Target depth is read bilinearly and the sample is dropped if
/// the target is out of bounds or any of the four depth taps is invalid.
/// Output is row-major by source pixel. pose_i/pose_j are world_from_ego.
std::vector<SceneFlowSample> lift_scene_flow(const FlowImage& flow, const DepthImage& depth_i,
                                             const DepthImage& depth_j, const DynamicMask& mask_i,
                                             const CameraModel& cam, const RigidTransform& pose_i,
                                             const RigidTransform& pose_j, double t_i, double t_j,
                                             std::uint32_t stride);

/// Annotate each sample with the radial velocity of its Euclidean-nearest
/// dynamic radar point (frame-t_i ego coordinates; ties to the lowest radar
/// index). Samples farther than max_distance from every dynamic point keep
/// radial_velocity unset. When ego_velocity is given, the inherited value is
/// ego-motion compensated (v_r + d . v_ego); pass the estimate from
/// estimate_ego_velocity here.
std::vector<SceneFlowSample> associate_radial_velocity(
    std::vector<SceneFlowSample> samples, const RadarFrame& frame_i,
    const std::vector<bool>& dyn_labels, const RigidTransform& ego_pose_i,
    const std::optional<Vec3>& ego_velocity = std::nullopt, double max_distance = 3.0);

}  // namespace radarflow
