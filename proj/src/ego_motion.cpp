#include "radarflow/ego_motion.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "radarflow/rng.hpp"

namespace radarflow {
namespace {

constexpr double kRankTolerance = 1e-6;  // singular values below tol*sigma_max are zeroed

struct LsqSolution {
  Vec3 velocity = Vec3::Zero();
  bool rank_deficient = false;
};

// Solve min_v sum (v_r,i + d_i.v)^2 over the given rows via SVD, zeroing
// unobservable directions instead of extrapolating along them.
LsqSolution solve_velocity(const Eigen::MatrixXd& directions, const Eigen::VectorXd& vr) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(directions, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = kRankTolerance * sv(0);
  LsqSolution out;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) {
      inv(i) = 1.0 / sv(i);
    } else {
      out.rank_deficient = true;
    }
  }
  // d_i.v = -v_r,i for static points.
  out.velocity = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * (-vr));
  return out;
}

}  // namespace

EgoMotionEstimate estimate_ego_velocity(const RadarFrame& frame, const RansacConfig& cfg) {
  const std::size_t n = frame.points.size();
  if (n < 3) {
    throw Error(ErrorCode::TooFewPoints,
                "need >= 3 radar points, got " + std::to_string(n));
  }
  if (cfg.iterations < 1 || !(cfg.inlier_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "iterations >= 1 and inlier_threshold > 0 required");
  }

  Eigen::MatrixXd dirs(n, 3);
  Eigen::VectorXd vr(n);
  for (std::size_t i = 0; i < n; ++i) {
    dirs.row(i) = frame.points[i].position.normalized();
    vr(i) = frame.points[i].radial_velocity;
  }

  std::vector<std::uint32_t> best_inliers;
  bool have_hypothesis = false;

  for (std::uint32_t k = 0; k < cfg.iterations; ++k) {
    SplitMix64 rng(derive_seed(cfg.seed, "ego-motion-hypothesis", k + 1));

    // Resample degenerate triples a bounded number of times; keep the last
    // draw regardless so a globally degenerate frame still yields a
    // (rank-truncated) hypothesis.
    Eigen::Matrix3d d3;
    Eigen::Vector3d v3;
    d3.row(0) = dirs.row(0);
    d3.row(1) = dirs.row(1 % n);
    d3.row(2) = dirs.row(2 % n);
    v3 << vr(0), vr(1 % n), vr(2 % n);
    for (int attempt = 0; attempt < 32; ++attempt) {
      std::uint32_t a = std::uint32_t(rng.below(n));
      std::uint32_t b = std::uint32_t(rng.below(n));
      std::uint32_t c = std::uint32_t(rng.below(n));
      if (a == b || a == c || b == c) continue;
      d3.row(0) = dirs.row(a);
      d3.row(1) = dirs.row(b);
      d3.row(2) = dirs.row(c);
      v3 << vr(a), vr(b), vr(c);
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(d3);
      if (svd.singularValues()(2) > kRankTolerance * svd.singularValues()(0)) break;
    }

    const LsqSolution hyp = solve_velocity(d3, v3);
    std::vector<std::uint32_t> inliers;
    inliers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = vr(i) + dirs.row(i).dot(hyp.velocity);
      if (std::abs(r) <= cfg.inlier_threshold) inliers.push_back(std::uint32_t(i));
    }
    if (!have_hypothesis || inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      have_hypothesis = true;
    }
  }

  if (best_inliers.size() < cfg.min_inliers) {
    throw Error(ErrorCode::NoConsensus, "best consensus " + std::to_string(best_inliers.size()) +
                                            " < min_inliers " + std::to_string(cfg.min_inliers));
  }

  Eigen::MatrixXd din(best_inliers.size(), 3);
  Eigen::VectorXd vin(best_inliers.size());
  for (std::size_t i = 0; i < best_inliers.size(); ++i) {
    din.row(i) = dirs.row(best_inliers[i]);
    vin(i) = vr(best_inliers[i]);
  }
  const LsqSolution refit = solve_velocity(din, vin);

  EgoMotionEstimate est;
  est.velocity = refit.velocity;
  est.inlier_indices = std::move(best_inliers);
  est.rank_deficient = refit.rank_deficient;
  const Eigen::VectorXd residuals = vin + din * refit.velocity;
  est.rms_residual = std::sqrt(residuals.squaredNorm() / double(residuals.size()));
  return est;
}

std::vector<bool> classify_dynamic(const RadarFrame& frame, const EgoMotionEstimate& est,
                                   double tau_dyn) {
  if (!(tau_dyn > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "tau_dyn must be > 0");
  }
  std::vector<bool> labels(frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Vec3 d = frame.points[i].position.normalized();
    const double r = frame.points[i].radial_velocity + d.dot(est.velocity);
    labels[i] = std::abs(r) > tau_dyn;
  }
  return labels;
}

std::vector<double> compensate_radial_velocities(const RadarFrame& frame, const Vec3& velocity) {
  std::vector<double> out(frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Vec3 d = frame.points[i].position.normalized();
    out[i] = frame.points[i].radial_velocity + d.dot(velocity);
  }
  return out;
}

}  // namespace radarflow
