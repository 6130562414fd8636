#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "radarflow/core.hpp"
#include "radarflow/deformation.hpp"
#include "radarflow/flow_lift.hpp"
#include "radarflow/segmentation.hpp"

namespace radarflow {

/// Piecewise-constant ego motion: speed along the heading plus a yaw rate,
/// integrated analytically. The last segment extends past its duration.
struct EgoSegment {
  double duration = 5.0;   // s
  double speed = 8.0;      // m/s
  double yaw_rate = 0.0;   // rad/s
};

struct BoxSpec {
  Vec3 center = Vec3::Zero();       // world frame
  Vec3 half_extents = Vec3::Ones();
};

struct DynamicBoxSpec {
  Vec3 center0 = Vec3::Zero();      // world frame at t = 0
  Vec3 half_extents = Vec3::Ones();
  Vec3 velocity = Vec3::Zero();     // constant, world frame
};

struct RadarModel {
  double azimuth_fov_deg = 100.0;   // full width
  double elevation_fov_deg = 24.0;  // full height
  double max_range = 60.0;          // m
  std::uint32_t points_per_frame = 300;
  double sigma_p = 0.05;            // m, per-axis position noise
  double sigma_v = 0.1;             // m/s, radial velocity noise
};

struct SceneConfig {
  double duration = 5.0;      // s
  double frame_rate = 10.0;   // Hz
  double ego_height = 0.9;    // m above the ground plane
  std::vector<EgoSegment> ego_segments{EgoSegment{}};
  bool ground_plane = true;
  std::vector<BoxSpec> static_boxes;
  std::vector<DynamicBoxSpec> dynamic_boxes;
  RadarModel radar;
  CameraModel camera;
  double relative_depth_scale = 3.0;  // s_gt: depth_relative = depth_metric / s_gt
  std::uint64_t seed = 0;

  /// The standard desk-scale scene: straight ego at 8 m/s, ground plane,
  /// parked clutter, and three dynamic boxes (leading, oncoming, diagonal
  /// crossing), 320x180 camera, ~300 radar points per frame.
  static SceneConfig default_test_scene();
};

/// Everything the oracles need about one simulated frame.
struct FrameBundle {
  double timestamp = 0.0;
  RadarFrame radar;
  std::vector<bool> dyn_labels_gt;
  DepthImage depth_metric, depth_relative;
  DynamicMask mask_gt;
  std::optional<FlowImage> flow_to_next;
  RigidTransform ego_pose;           // world_from_ego
  Vec3 ego_velocity_sensor = Vec3::Zero();  // GT, sensor frame
  std::vector<Vec3> object_centers;  // dynamic boxes at this timestamp, world frame
};

/// Analytic scene geometry. Frame generation and every ground-truth query
/// (ray casting, poses, velocities) go through this class so the raster
/// outputs and the oracles cannot drift apart.
class Scene {
 public:
  explicit Scene(SceneConfig cfg);

  const SceneConfig& config() const { return cfg_; }
  std::size_t frame_count() const { return frame_count_; }
  double frame_time(std::size_t k) const { return double(k) / cfg_.frame_rate; }

  RigidTransform ego_pose(double t) const;  // world_from_ego
  Vec3 ego_velocity_world(double t) const;

  struct Hit {
    double range = 0.0;
    Vec3 point = Vec3::Zero();     // world frame
    Vec3 velocity = Vec3::Zero();  // world frame
    bool dynamic = false;
    std::int32_t object = -1;      // index into dynamic_boxes when dynamic
  };
  /// First surface along origin + s*dir (dir unit, world frame) at time t.
  std::optional<Hit> raycast(const Vec3& origin, const Vec3& dir, double t) const;

  FrameBundle make_frame(std::size_t k) const;

 private:
  SceneConfig cfg_;
  std::size_t frame_count_ = 0;
  struct SegState {
    double t0, x, y, heading, speed, yaw_rate, duration;
  };
  std::vector<SegState> segs_;
};

/// All frames of the scene. Frames are generated from independent per-frame
/// seed streams, so results are identical for any thread count.
std::vector<FrameBundle> simulate(const SceneConfig& cfg, unsigned threads = 1);

/// Exact dynamic correspondences between frame_i and frame_i+1, raster-free:
/// source pixels are strided over the image, the scene is ray-cast at the
/// exact pixel, and the hit point is moved rigidly. radial_velocity carries
/// the exact ego-motion-compensated radial rate.
std::vector<SceneFlowSample> exact_scene_flow_samples(const Scene& scene, std::size_t frame_i,
                                                      std::uint32_t stride);

/// Pipeline outputs to score against ground truth. Empty vectors skip their
/// section; non-empty ones must match the frame count.
struct PipelinePredictions {
  std::vector<Vec3> ego_velocities;
  std::vector<std::vector<bool>> dyn_labels;
  std::vector<DynamicMask> masks;
  std::vector<double> scales;
  std::vector<std::vector<SceneFlowSample>> flow_samples;  // per consecutive pair
  const DeformationField* field = nullptr;
};

struct MetricsReport {
  std::optional<double> ego_rmse;            // m/s
  std::optional<double> label_precision, label_recall, label_f1;
  std::optional<double> mask_iou;
  std::optional<double> scale_rel_error;     // mean |s_hat - s_gt| / s_gt
  std::optional<double> flow_epe;            // m, mean over paired samples
  std::optional<double> warp_epe;            // m, mean over exact GT samples
  std::optional<double> rad_abs_mean, rad_abs_max;  // m, |radial residual|
};

MetricsReport evaluate(const Scene& scene, const std::vector<FrameBundle>& truth,
                       const PipelinePredictions& pred, std::uint32_t eval_stride = 4);

}  // namespace radarflow
