#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "radarflow/core.hpp"

namespace radarflow {

/// Square probability patch anchored at an image position. The patch spans
/// pixels [center - size/2, center - size/2 + size) on each axis and may
/// extend past the image border; compositing clips it.
struct Roi {
  std::int32_t center_u = 0, center_v = 0;
  std::uint32_t patch_w = 0, patch_h = 0;
  std::vector<double> patch;  // row-major, values in [0, 1]

  double at(std::uint32_t c, std::uint32_t r) const { return patch[std::size_t(r) * patch_w + c]; }
  double& at(std::uint32_t c, std::uint32_t r) { return patch[std::size_t(r) * patch_w + c]; }
  std::int32_t u0() const { return center_u - std::int32_t(patch_w / 2); }
  std::int32_t v0() const { return center_v - std::int32_t(patch_h / 2); }
};

struct DynamicMask {
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1, row-major

  static DynamicMask zeros(std::uint32_t w, std::uint32_t h) {
    return {w, h, std::vector<std::uint8_t>(std::size_t(w) * h, 0)};
  }
  std::uint8_t at(std::uint32_t u, std::uint32_t v) const {
    return data[std::size_t(v) * width + u];
  }
  std::uint8_t& at(std::uint32_t u, std::uint32_t v) { return data[std::size_t(v) * width + u]; }
};

/// Project dynamic radar points into the image and pick at most max_anchors
/// of them (uniform, without replacement, seeded). Points behind the camera
/// or off the image are dropped. Anchors keep the radar point order.
std::vector<std::pair<std::int32_t, std::int32_t>> project_dynamic_rois(
    const RadarFrame& frame, const std::vector<bool>& labels, const CameraModel& cam,
    std::uint32_t patch_size, std::uint32_t max_anchors, std::uint64_t seed);

/// Deterministic geometric stand-in for a learned per-ROI scorer: each patch
/// pixel takes the max Gaussian-kernel response over the dynamic radar points
/// projecting inside the patch.
Roi score_roi_geometric(const RadarFrame& frame, const std::vector<bool>& labels,
                        const CameraModel& cam, std::pair<std::int32_t, std::int32_t> center,
                        std::uint32_t patch_size, double sigma_px);

/// Per-pixel max over all ROI patches covering the pixel, thresholded at tau
/// (strict). Pixels covered by no ROI stay 0. ROIs are clipped at the border.
DynamicMask composite_mask(const std::vector<Roi>& rois, std::uint32_t width, std::uint32_t height,
                           double tau);

}  // namespace radarflow
