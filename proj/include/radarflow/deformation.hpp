#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radarflow/core.hpp"
#include "radarflow/flow_lift.hpp"

namespace radarflow {

/// Invertible time-conditioned coordinate map. forward maps canonical-space
/// points to their position at normalized time t in [0, 1]; inverse is exact.
struct DeformationField {
  virtual ~DeformationField() = default;
  virtual Vec3 forward(const Vec3& x, double t) const = 0;
  virtual Vec3 inverse(const Vec3& y, double t) const = 0;
  /// forward(inverse(x, t_i), t_j); overridable so implementations can skip
  /// the intermediate de/renormalization.
  virtual Vec3 warp(const Vec3& x, double t_i, double t_j) const {
    return forward(inverse(x, t_i), t_j);
  }
  /// Map a sample timestamp in seconds onto the field's [0, 1] time axis.
  virtual double normalize_time(double t_seconds) const { return t_seconds; }
};

/// forward(field, inverse(field, x, t_i), t_j). t_i, t_j in [0, 1].
Vec3 warp(const DeformationField& field, const Vec3& x, double t_i, double t_j);

/// Stack of affine coupling layers, one active coordinate per layer (cycling
/// axis). The conditioner is a two-hidden-layer tanh perceptron of the two
/// passive coordinates and a sinusoidal embedding of t, emitting
/// (log_scale_raw, shift) for the active coordinate, with the effective
/// log-scale bounded to [-2, 2] via 2*tanh(log_scale_raw), so every parameter
/// choice is invertible. One parameter set is shared across all timestamps.
struct CouplingField final : DeformationField {
  static constexpr int kHidden = 64;
  static constexpr int kFreqPairs = 4;
  static constexpr int kEmbedDim = 2 * kFreqPairs;
  static constexpr int kCondIn = 2 + kEmbedDim;
  static constexpr double kLogScaleBound = 2.0;

  int n_layers = 6;
  Vec3 center = Vec3::Zero();   // coordinate normalization
  double radius = 1.0;
  double time_origin = 0.0;     // seconds -> [0, 1] mapping
  double time_span = 1.0;
  Eigen::VectorXd params;

  static constexpr int params_per_layer() {
    return kHidden * kCondIn + kHidden + kHidden * kHidden + kHidden + 2 * kHidden + 2;
  }
  int param_count() const { return n_layers * params_per_layer(); }

  /// Identity-initialized field: hidden weights are small random values, the
  /// output layer is zero, so forward == identity until trained.
  static CouplingField make(int n_layers, std::uint64_t seed);

  /// make(), plus coordinate/time normalization frozen from the samples.
  static CouplingField init_for_samples(std::span<const SceneFlowSample> samples, int n_layers,
                                        std::uint64_t seed);

  Vec3 forward(const Vec3& x, double t) const override;
  Vec3 inverse(const Vec3& y, double t) const override;
  Vec3 warp(const Vec3& x, double t_i, double t_j) const override;
  double normalize_time(double t_seconds) const override {
    return (t_seconds - time_origin) / time_span;
  }
};

/// Keyframed SE(3) trajectory (canonical -> frame at t), interpolated with
/// quaternion slerp. Baseline / oracle for the coupling field on rigid scenes.
struct RigidTrajectoryField final : DeformationField {
  std::vector<double> times;           // normalized, strictly increasing
  std::vector<RigidTransform> poses;   // same length; identity at the canonical index
  double time_origin = 0.0;
  double time_span = 1.0;

  RigidTransform pose_at(double t) const;
  Vec3 forward(const Vec3& x, double t) const override { return pose_at(t) * x; }
  Vec3 inverse(const Vec3& y, double t) const override { return pose_at(t).inverse() * y; }
  double normalize_time(double t_seconds) const override {
    return (t_seconds - time_origin) / time_span;
  }
};

struct LossWeights {
  double lambda_flow = 1.0;
  double lambda_rad = 0.5;
};

/// Squared-error flow residual for one sample given the predicted frame-t_j
/// position.
double flow_residual_sq(const SceneFlowSample& s, const Vec3& x_hat_tj);

/// Signed radial residual F_i . unit(x_ti - radar_origin) - v_r * dt with
/// F_i = T_j_to_i * x_hat_tj - x_ti. Throws MissingRadialVelocity /
/// SampleAtRadarOrigin.
double rad_residual(const SceneFlowSample& s, const Vec3& x_hat_tj);

/// Sum over samples of ||warp(x_ti) - x_tj||^2, compared in frame-t_j
/// coordinates.
double loss_flow(const DeformationField& field, std::span<const SceneFlowSample> samples);

/// Sum over samples of |rad_residual|; every sample must carry a radial
/// velocity.
double loss_rad(const DeformationField& field, std::span<const SceneFlowSample> samples);

/// lambda_flow * loss_flow(all samples) + lambda_rad * loss_rad(samples with
/// a radial velocity).
double total_loss(const DeformationField& field, std::span<const SceneFlowSample> samples,
                  const LossWeights& weights);

/// Exact reverse-mode gradient of total_loss with respect to field.params.
Eigen::VectorXd gradients(const CouplingField& field, std::span<const SceneFlowSample> samples,
                          const LossWeights& weights);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::uint32_t iterations = 2000;
  std::uint32_t batch_size = 1024;
  double lambda_flow = 1.0;
  double lambda_rad = 0.5;
  std::uint64_t seed = 0;
  AdamParams adam;
};

struct FitResult {
  CouplingField field;
  std::vector<double> loss_history;  // batch objective per iteration
};

/// Adam over seeded mini-batches; deterministic given cfg.seed. Throws
/// NonFiniteLoss if the objective stops being finite.
FitResult fit(CouplingField field, std::span<const SceneFlowSample> samples,
              const TrainConfig& cfg);

/// Closed-form rigid baseline: per consecutive timestamp pair, the best-fit
/// SE(3) aligning x_ti to x_tj (Kabsch), chained so the middle timestamp is
/// the identity. Throws DegenerateCorrespondences when a pair has < 3 or
/// collinear correspondences.
RigidTrajectoryField fit_rigid(std::span<const SceneFlowSample> samples,
                               const std::vector<double>& timestamps_seconds);

}  // namespace radarflow
