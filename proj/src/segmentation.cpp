#include "radarflow/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "radarflow/rng.hpp"

namespace radarflow {

std::vector<std::pair<std::int32_t, std::int32_t>> project_dynamic_rois(
    const RadarFrame& frame, const std::vector<bool>& labels, const CameraModel& cam,
    std::uint32_t patch_size, std::uint32_t max_anchors, std::uint64_t seed) {
  if (patch_size == 0) {
    throw Error(ErrorCode::InvalidConfig, "patch_size must be > 0");
  }
  if (labels.size() != frame.points.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels size != point count");
  }

  std::vector<std::pair<std::int32_t, std::int32_t>> anchors;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (!labels[i]) continue;
    const Vec3 p_cam = cam.cam_from_ego * frame.points[i].position;
    if (p_cam.z() <= 1e-6) continue;
    const Vec2 uv = project(cam, p_cam);
    if (!cam.contains(uv.x(), uv.y())) continue;
    anchors.emplace_back(std::int32_t(std::lround(uv.x())), std::int32_t(std::lround(uv.y())));
  }

  if (anchors.size() > max_anchors) {
    SplitMix64 rng(seed);
    const auto keep = sample_without_replacement(std::uint32_t(anchors.size()), max_anchors, rng);
    std::vector<std::pair<std::int32_t, std::int32_t>> picked;
    picked.reserve(keep.size());
    for (std::uint32_t k : keep) picked.push_back(anchors[k]);
    anchors = std::move(picked);
  }
  return anchors;
}

Roi score_roi_geometric(const RadarFrame& frame, const std::vector<bool>& labels,
                        const CameraModel& cam, std::pair<std::int32_t, std::int32_t> center,
                        std::uint32_t patch_size, double sigma_px) {
  if (!(sigma_px > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "sigma_px must be > 0");
  }
  if (labels.size() != frame.points.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels size != point count");
  }

  Roi roi;
  roi.center_u = center.first;
  roi.center_v = center.second;
  roi.patch_w = roi.patch_h = patch_size;
  roi.patch.assign(std::size_t(patch_size) * patch_size, 0.0);

  const double u0 = double(roi.u0());
  const double v0 = double(roi.v0());

  // Projections of dynamic points landing inside this patch's footprint.
  std::vector<Vec2> hits;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (!labels[i]) continue;
    const Vec3 p_cam = cam.cam_from_ego * frame.points[i].position;
    if (p_cam.z() <= 1e-6) continue;
    const Vec2 uv = project(cam, p_cam);
    if (uv.x() < u0 || uv.x() >= u0 + double(patch_size) || uv.y() < v0 ||
        uv.y() >= v0 + double(patch_size)) {
      continue;
    }
    hits.push_back(uv);
  }
  if (hits.empty()) return roi;

  const double inv_two_sigma2 = 1.0 / (2.0 * sigma_px * sigma_px);
  for (std::uint32_t r = 0; r < patch_size; ++r) {
    for (std::uint32_t c = 0; c < patch_size; ++c) {
      const double qu = u0 + double(c);
      const double qv = v0 + double(r);
      double best = 0.0;
      for (const Vec2& h : hits) {
        const double d2 = (qu - h.x()) * (qu - h.x()) + (qv - h.y()) * (qv - h.y());
        best = std::max(best, std::exp(-d2 * inv_two_sigma2));
      }
      roi.at(c, r) = best;
    }
  }
  return roi;
}

DynamicMask composite_mask(const std::vector<Roi>& rois, std::uint32_t width, std::uint32_t height,
                           double tau) {
  if (tau < 0.0 || tau > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "tau must be in [0, 1]");
  }
  std::vector<double> confidence(std::size_t(width) * height, 0.0);
  for (const Roi& roi : rois) {
    const std::int32_t u0 = roi.u0(), v0 = roi.v0();
    const std::int32_t r_begin = std::max(0, -v0);
    const std::int32_t r_end = std::min<std::int32_t>(roi.patch_h, std::int32_t(height) - v0);
    const std::int32_t c_begin = std::max(0, -u0);
    const std::int32_t c_end = std::min<std::int32_t>(roi.patch_w, std::int32_t(width) - u0);
    for (std::int32_t r = r_begin; r < r_end; ++r) {
      for (std::int32_t c = c_begin; c < c_end; ++c) {
        double& cell = confidence[std::size_t(v0 + r) * width + std::size_t(u0 + c)];
        cell = std::max(cell, roi.at(std::uint32_t(c), std::uint32_t(r)));
      }
    }
  }
  DynamicMask mask = DynamicMask::zeros(width, height);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    mask.data[i] = confidence[i] > tau ? 1 : 0;
  }
  return mask;
}

}  // namespace radarflow
