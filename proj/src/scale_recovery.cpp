#include "radarflow/scale_recovery.hpp"

#include <algorithm>
#include <cmath>

namespace radarflow {

std::vector<Vec3> sphere_directions(const std::vector<Vec3>& points) {
  std::vector<Vec3> dirs;
  dirs.reserve(points.size());
  for (const Vec3& p : points) {
    const double n = p.norm();
    if (n <= 1e-6) {
      throw Error(ErrorCode::ZeroNorm, "point with norm " + std::to_string(n));
    }
    dirs.push_back(p / n);
  }
  return dirs;
}

std::array<std::uint32_t, 3> nearest3_on_sphere(const KdTree3& visual_dirs, const Vec3& query) {
  if (visual_dirs.size() < 3) {
    throw Error(ErrorCode::TooFewPoints,
                "need >= 3 visual directions, got " + std::to_string(visual_dirs.size()));
  }
  const auto nn = visual_dirs.knn(query, 3);
  return {nn[0].index, nn[1].index, nn[2].index};
}

double plane_scale(const Vec3& p_radar, const Vec3& p_a, const Vec3& p_b, const Vec3& p_c,
                   const ScaleConfig& cfg) {
  const Vec3 ab = p_a - p_b;
  const Vec3 bc = p_b - p_c;
  const Vec3 n = ab.cross(bc);
  const double edge_scale = ab.norm() * bc.norm();
  if (edge_scale <= 0.0 || n.norm() / edge_scale < 1e-6) {
    throw Error(ErrorCode::DegeneratePlane, "collinear neighbors");
  }
  const double denom = n.dot(p_a);
  if (std::abs(n.normalized().dot(p_a.normalized())) < cfg.min_normal_dot) {
    throw Error(ErrorCode::UnstableDenominator, "plane nearly contains the camera origin");
  }
  const double s = n.dot(p_radar) / denom;
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(ErrorCode::NonPositiveScale, "s = " + std::to_string(s));
  }
  return s;
}

std::vector<ScaleSample> collect_scale_samples(const DepthImage& depth, const CameraModel& cam,
                                               const RadarFrame& frame,
                                               const std::vector<bool>& dyn_labels,
                                               const ScaleConfig& cfg) {
  if (depth.scale_state != ScaleState::Relative) {
    throw Error(ErrorCode::ScaleStateMismatch, "collect_scale_samples expects a relative depth map");
  }
  if (dyn_labels.size() != frame.points.size()) {
    throw Error(ErrorCode::LengthMismatch, "dyn_labels size != point count");
  }
  if (cfg.subsample_stride == 0) {
    throw Error(ErrorCode::InvalidConfig, "subsample_stride must be >= 1");
  }

  // Visual points: back-projected valid depth pixels, camera frame, relative scale.
  std::vector<Vec3> visual;
  for (std::uint32_t v = 0; v < depth.height; v += cfg.subsample_stride) {
    for (std::uint32_t u = 0; u < depth.width; u += cfg.subsample_stride) {
      const double d = depth.at(u, v);
      if (d > 0.0) visual.push_back(back_project(cam, u, v, d));
    }
  }

  bool any_static = false;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (!dyn_labels[i]) any_static = true;
  }
  if (!any_static) {
    throw Error(ErrorCode::NoStaticPoints, "all radar points labeled dynamic");
  }

  const KdTree3 tree(sphere_directions(visual));

  std::vector<ScaleSample> samples;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (dyn_labels[i]) continue;  // dynamic points are excluded from scale voting
    const Vec3 p_cam = cam.cam_from_ego * frame.points[i].position;
    const double norm = p_cam.norm();
    if (norm <= 1e-6 || p_cam.z() <= 0.0) continue;
    const Vec3 dir = p_cam / norm;

    std::array<std::uint32_t, 3> nn;
    try {
      nn = nearest3_on_sphere(tree, dir);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TooFewPoints) throw;
      continue;
    }

    // Locality on the sphere: max pairwise angle among the query direction
    // and the three neighbor directions.
    const Vec3 dirs4[4] = {dir, tree.point(nn[0]), tree.point(nn[1]), tree.point(nn[2])};
    double max_angle = 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        const double c = std::clamp(dirs4[a].dot(dirs4[b]), -1.0, 1.0);
        max_angle = std::max(max_angle, std::acos(c));
      }
    }
    if (max_angle > cfg.max_spherical_spread) continue;

    // Similar depth: the three neighbors must not straddle a discontinuity.
    const Vec3 pa = visual[nn[0]], pb = visual[nn[1]], pc = visual[nn[2]];
    const double zmin = std::min({pa.z(), pb.z(), pc.z()});
    const double zmax = std::max({pa.z(), pb.z(), pc.z()});
    if (zmin <= 0.0 || zmax / zmin > cfg.max_depth_ratio) continue;

    double s;
    try {
      s = plane_scale(p_cam, pa, pb, pc, cfg);
    } catch (const Error&) {
      continue;
    }
    samples.push_back({std::uint32_t(i), s, nn});
  }
  return samples;
}

double vote_scale(const std::vector<ScaleSample>& samples, const ScaleConfig& cfg) {
  if (!(cfg.hist_min < cfg.hist_max) || cfg.hist_bins < 2) {
    throw Error(ErrorCode::InvalidConfig, "histogram range/bins invalid");
  }
  const double width = (cfg.hist_max - cfg.hist_min) / double(cfg.hist_bins);
  std::vector<std::uint32_t> counts(cfg.hist_bins, 0);
  std::size_t in_range = 0;
  for (const ScaleSample& s : samples) {
    if (s.scale < cfg.hist_min || s.scale > cfg.hist_max) continue;
    std::uint32_t bin = std::uint32_t((s.scale - cfg.hist_min) / width);
    bin = std::min(bin, cfg.hist_bins - 1);
    ++counts[bin];
    ++in_range;
  }
  if (in_range == 0) {
    throw Error(ErrorCode::NoValidSamples, "no samples inside the histogram range");
  }
  std::uint32_t mode = 0;
  for (std::uint32_t b = 1; b < cfg.hist_bins; ++b) {
    if (counts[b] > counts[mode]) mode = b;  // ties keep the lower bin
  }

  // Median over the mode bin and its two adjacent bins removes quantization bias.
  std::vector<double> window;
  for (const ScaleSample& s : samples) {
    if (s.scale < cfg.hist_min || s.scale > cfg.hist_max) continue;
    std::uint32_t bin = std::uint32_t((s.scale - cfg.hist_min) / width);
    bin = std::min(bin, cfg.hist_bins - 1);
    if (bin + 1 >= mode && bin <= mode + 1) window.push_back(s.scale);
  }
  std::sort(window.begin(), window.end());
  const std::size_t m = window.size();
  return m % 2 == 1 ? window[m / 2] : 0.5 * (window[m / 2 - 1] + window[m / 2]);
}

DepthImage apply_scale(const DepthImage& depth, double s) {
  if (!(s > 0.0)) {
    throw Error(ErrorCode::NonPositiveScale, "s = " + std::to_string(s));
  }
  if (depth.scale_state != ScaleState::Relative) {
    throw Error(ErrorCode::ScaleStateMismatch, "apply_scale expects a relative depth map");
  }
  DepthImage out = depth;
  for (double& d : out.data) {
    if (d > 0.0) d *= s;
  }
  out.scale_state = ScaleState::Metric;
  return out;
}

}  // namespace radarflow
