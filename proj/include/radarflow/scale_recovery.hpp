#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "radarflow/core.hpp"
#include "radarflow/kdtree.hpp"

namespace radarflow {

/// One per-radar-point scale estimate from a local plane constraint.
struct ScaleSample {
  std::uint32_t radar_index = 0;
  double scale = 0.0;                          // > 0, dimensionless
  std::array<std::uint32_t, 3> neighbor_indices{};  // into the visual point list, nearest first
};

struct ScaleConfig {
  double max_spherical_spread = 0.02;  // rad, max pairwise angle among query + neighbors
  double max_depth_ratio = 1.15;       // max/min neighbor depth
  double min_normal_dot = 0.05;        // |unit normal . unit anchor| lower bound
  double hist_min = 0.05, hist_max = 50.0;
  std::uint32_t hist_bins = 512;
  std::uint32_t subsample_stride = 4;
};

/// Unit directions p / ||p||. Throws ZeroNorm if any ||p|| <= 1e-6.
std::vector<Vec3> sphere_directions(const std::vector<Vec3>& points);

/// Indices of the 3 nearest directions (Euclidean distance between unit
/// vectors, which is monotone in angle), nearest first, ties to lower index.
std::array<std::uint32_t, 3> nearest3_on_sphere(const KdTree3& visual_dirs, const Vec3& query);

/// Scale from the plane through three visual neighbors:
///   n = (p_a - p_b) x (p_b - p_c),   s = (n . p_radar) / (n . p_a)
/// Throws DegeneratePlane (collinear neighbors), UnstableDenominator
/// (plane nearly through the origin), NonPositiveScale.
double plane_scale(const Vec3& p_radar, const Vec3& p_a, const Vec3& p_b, const Vec3& p_c,
                   const ScaleConfig& cfg);

/// Per-point scale samples for one frame. Static radar points are associated
/// with back-projected depth pixels by direction on the unit sphere; samples
/// violating the spread / depth-ratio / plane validity constraints are
/// silently dropped. Radar points are taken in the camera frame via
/// cam.cam_from_ego (the radar sensor frame is the ego frame).
std::vector<ScaleSample> collect_scale_samples(const DepthImage& depth, const CameraModel& cam,
                                               const RadarFrame& frame,
                                               const std::vector<bool>& dyn_labels,
                                               const ScaleConfig& cfg);

/// Histogram vote over [hist_min, hist_max]; the result is the median of the
/// samples falling in the fullest bin and its two adjacent bins.
double vote_scale(const std::vector<ScaleSample>& samples, const ScaleConfig& cfg);

/// Multiply every valid pixel by s and mark the image metric.
DepthImage apply_scale(const DepthImage& depth, double s);

}  // namespace radarflow
