#pragma once

#include <cstdint>
#include <vector>

#include "radarflow/core.hpp"

namespace radarflow {

/// Single-frame ego velocity from radar radial velocities.
///
/// Residual model for a static point with unit direction d_i = p_i / ||p_i||:
///   r_i = v_r,i + d_i . v_ego
/// so r_i == 0 when the world is static and v_ego is exact. The sign
/// convention (v_r positive for increasing range) is fixed project-wide.
struct EgoMotionEstimate {
  Vec3 velocity = Vec3::Zero();         // sensor-frame, m/s
  std::vector<std::uint32_t> inlier_indices;  // sorted, unique
  double rms_residual = 0.0;            // m/s, over the inlier set after refit
  bool rank_deficient = false;          // true when the direction spread is degenerate
};

struct RansacConfig {
  std::uint32_t iterations = 200;
  double inlier_threshold = 0.25;  // m/s
  std::uint32_t min_inliers = 10;
  std::uint64_t seed = 0;
};

/// RANSAC over 3-point velocity hypotheses, then least-squares refit on the
/// consensus set. Deterministic given (frame, cfg): hypothesis k draws from a
/// stream derived from cfg.seed and k, and the winner is chosen by
/// (inlier_count desc, hypothesis_index asc).
///
/// Throws TooFewPoints (< 3 points) and NoConsensus (best support below
/// cfg.min_inliers). A degenerate 3-point sample is resampled, not an error;
/// globally degenerate direction spreads produce a rank-deficient estimate
/// with the unobservable velocity components zeroed.
EgoMotionEstimate estimate_ego_velocity(const RadarFrame& frame, const RansacConfig& cfg);

/// Point i is dynamic iff |v_r,i + d_i . v| > tau_dyn (strict).
std::vector<bool> classify_dynamic(const RadarFrame& frame, const EgoMotionEstimate& est,
                                   double tau_dyn);

/// Ego-motion compensated radial velocities: v_r,i + d_i . v. For a static
/// point this is ~0; for a dynamic point it is the world-frame radial rate
/// of the target as seen from a static sensor at the radar position.
std::vector<double> compensate_radial_velocities(const RadarFrame& frame, const Vec3& velocity);

}  // namespace radarflow
