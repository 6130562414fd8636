#include "radarflow/deformation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "radarflow/rng.hpp"

namespace radarflow {
namespace {

constexpr int kH = CouplingField::kHidden;
constexpr int kCI = CouplingField::kCondIn;
constexpr int kED = CouplingField::kEmbedDim;
constexpr double kBound = CouplingField::kLogScaleBound;

using VecH = Eigen::Matrix<double, kH, 1>;
using MatW1 = Eigen::Matrix<double, kH, kCI>;
using MatW2 = Eigen::Matrix<double, kH, kH>;
using MatW3 = Eigen::Matrix<double, 2, kH>;
using CondIn = Eigen::Matrix<double, kCI, 1>;
using Embed = Eigen::Matrix<double, kED, 1>;

// Parameter block layout within one layer (column-major matrices).
constexpr int kOffW1 = 0;
constexpr int kOffB1 = kOffW1 + kH * kCI;
constexpr int kOffW2 = kOffB1 + kH;
constexpr int kOffB2 = kOffW2 + kH * kH;
constexpr int kOffW3 = kOffB2 + kH;
constexpr int kOffB3 = kOffW3 + 2 * kH;

struct LayerView {
  Eigen::Map<const MatW1> W1;
  Eigen::Map<const VecH> b1;
  Eigen::Map<const MatW2> W2;
  Eigen::Map<const VecH> b2;
  Eigen::Map<const MatW3> W3;
  Eigen::Map<const Eigen::Vector2d> b3;
  explicit LayerView(const double* p)
      : W1(p + kOffW1), b1(p + kOffB1), W2(p + kOffW2), b2(p + kOffB2), W3(p + kOffW3),
        b3(p + kOffB3) {}
};

struct LayerGrad {
  Eigen::Map<MatW1> W1;
  Eigen::Map<VecH> b1;
  Eigen::Map<MatW2> W2;
  Eigen::Map<VecH> b2;
  Eigen::Map<MatW3> W3;
  Eigen::Map<Eigen::Vector2d> b3;
  explicit LayerGrad(double* p)
      : W1(p + kOffW1), b1(p + kOffB1), W2(p + kOffW2), b2(p + kOffB2), W3(p + kOffW3),
        b3(p + kOffB3) {}
};

Embed embed_time(double t) {
  Embed e;
  double freq = std::numbers::pi;
  for (int k = 0; k < CouplingField::kFreqPairs; ++k) {
    e(2 * k) = std::sin(freq * t);
    e(2 * k + 1) = std::cos(freq * t);
    freq *= 2.0;
  }
  return e;
}

struct CondTape {
  CondIn in;
  VecH h1, h2;
  double s_raw = 0.0, shift = 0.0;
};

struct LayerTape {
  Vec3 input = Vec3::Zero();  // state entering this layer's op
  CondTape cond;
};

using PassTape = std::vector<LayerTape>;

// tanh via the vectorized double exp; saturates exactly to +-1 on overflow.
inline VecH tanh_vec(const VecH& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

void eval_conditioner(const LayerView& lv, double p0, double p1, const Embed& emb,
                      CondTape& tape) {
  tape.in(0) = p0;
  tape.in(1) = p1;
  tape.in.segment<kED>(2) = emb;
  tape.h1 = tanh_vec(lv.W1 * tape.in + lv.b1);
  tape.h2 = tanh_vec(lv.W2 * tape.h1 + lv.b2);
  const Eigen::Vector2d o = lv.W3 * tape.h2 + lv.b3;
  tape.s_raw = o(0);
  tape.shift = o(1);
}

// Accumulates parameter gradients and returns dL/d(conditioner inputs).
CondIn conditioner_backward(const LayerView& lv, LayerGrad& g, const CondTape& t, double ds_raw,
                            double dshift) {
  const Eigen::Vector2d dout(ds_raw, dshift);
  g.W3 += dout * t.h2.transpose();
  g.b3 += dout;
  const VecH dz2 =
      ((lv.W3.transpose() * dout).array() * (1.0 - t.h2.array().square())).matrix();
  g.W2 += dz2 * t.h1.transpose();
  g.b2 += dz2;
  const VecH dz1 =
      ((lv.W2.transpose() * dz2).array() * (1.0 - t.h1.array().square())).matrix();
  g.W1 += dz1 * t.in.transpose();
  g.b1 += dz1;
  return lv.W1.transpose() * dz1;
}

// Coupling layers in normalized coordinates. tape may be null.
Vec3 run_forward_pass(const CouplingField& f, Vec3 xn, double t, PassTape* tape) {
  const Embed emb = embed_time(t);
  CondTape local;
  for (int l = 0; l < f.n_layers; ++l) {
    const LayerView lv(f.params.data() + std::size_t(l) * CouplingField::params_per_layer());
    const int a = l % 3, i0 = (a + 1) % 3, i1 = (a + 2) % 3;
    CondTape& ct = tape ? (*tape)[l].cond : local;
    if (tape) (*tape)[l].input = xn;
    eval_conditioner(lv, xn(i0), xn(i1), emb, ct);
    xn(a) = xn(a) * std::exp(kBound * std::tanh(ct.s_raw)) + ct.shift;
  }
  return xn;
}

Vec3 run_inverse_pass(const CouplingField& f, Vec3 yn, double t, PassTape* tape) {
  const Embed emb = embed_time(t);
  CondTape local;
  for (int l = f.n_layers - 1; l >= 0; --l) {
    const LayerView lv(f.params.data() + std::size_t(l) * CouplingField::params_per_layer());
    const int a = l % 3, i0 = (a + 1) % 3, i1 = (a + 2) % 3;
    CondTape& ct = tape ? (*tape)[l].cond : local;
    if (tape) (*tape)[l].input = yn;
    eval_conditioner(lv, yn(i0), yn(i1), emb, ct);
    yn(a) = (yn(a) - ct.shift) * std::exp(-kBound * std::tanh(ct.s_raw));
  }
  return yn;
}

// Reverse-mode through the forward pass; g arrives as dL/d(output).
Vec3 backward_forward_pass(const CouplingField& f, const PassTape& tape, Vec3 g,
                           double* grad_data) {
  for (int l = f.n_layers - 1; l >= 0; --l) {
    const std::size_t off = std::size_t(l) * CouplingField::params_per_layer();
    const LayerView lv(f.params.data() + off);
    LayerGrad gv(grad_data + off);
    const int a = l % 3, i0 = (a + 1) % 3, i1 = (a + 2) % 3;
    const CondTape& ct = tape[l].cond;
    const double xa = tape[l].input(a);
    const double th = std::tanh(ct.s_raw);
    const double scale = std::exp(kBound * th);
    const double ga = g(a);
    const double ds_raw = ga * xa * scale * kBound * (1.0 - th * th);
    const CondIn din = conditioner_backward(lv, gv, ct, ds_raw, /*dshift=*/ga);
    g(a) = ga * scale;
    g(i0) += din(0);
    g(i1) += din(1);
  }
  return g;
}

// Reverse-mode through the inverse pass (which applied layers n-1 .. 0).
Vec3 backward_inverse_pass(const CouplingField& f, const PassTape& tape, Vec3 g,
                           double* grad_data) {
  for (int l = 0; l < f.n_layers; ++l) {
    const std::size_t off = std::size_t(l) * CouplingField::params_per_layer();
    const LayerView lv(f.params.data() + off);
    LayerGrad gv(grad_data + off);
    const int a = l % 3, i0 = (a + 1) % 3, i1 = (a + 2) % 3;
    const CondTape& ct = tape[l].cond;
    const double ya = tape[l].input(a);
    const double th = std::tanh(ct.s_raw);
    const double inv_scale = std::exp(-kBound * th);
    const double ga = g(a);
    const double ds_raw = ga * (ya - ct.shift) * inv_scale * (-kBound) * (1.0 - th * th);
    const CondIn din = conditioner_backward(lv, gv, ct, ds_raw, /*dshift=*/-ga * inv_scale);
    g(a) = ga * inv_scale;
    g(i0) += din(0);
    g(i1) += din(1);
  }
  return g;
}

Vec3 warp_with_tape(const CouplingField& f, const Vec3& x, double nt_i, double nt_j,
                    PassTape& tape_inv, PassTape& tape_fwd) {
  const Vec3 xn = (x - f.center) / f.radius;
  const Vec3 zn = run_inverse_pass(f, xn, nt_i, &tape_inv);
  const Vec3 yn = run_forward_pass(f, zn, nt_j, &tape_fwd);
  return yn * f.radius + f.center;
}

// Shared loss + gradient evaluation over an index subset. grad may be null.
double evaluate_batch(const CouplingField& f, std::span<const SceneFlowSample> samples,
                      std::span<const std::uint32_t> indices, const LossWeights& w,
                      Eigen::VectorXd* grad) {
  PassTape tape_inv(f.n_layers), tape_fwd(f.n_layers);
  double loss = 0.0;
  for (const std::uint32_t idx : indices) {
    const SceneFlowSample& s = samples[idx];
    const double nt_i = f.normalize_time(s.t_i);
    const double nt_j = f.normalize_time(s.t_j);
    const Vec3 y_hat = warp_with_tape(f, s.x_ti, nt_i, nt_j, tape_inv, tape_fwd);

    Vec3 dy = Vec3::Zero();
    if (w.lambda_flow != 0.0) {
      const Vec3 e = y_hat - s.x_tj;
      loss += w.lambda_flow * e.squaredNorm();
      dy += (2.0 * w.lambda_flow) * e;
    }
    if (w.lambda_rad != 0.0 && s.radial_velocity) {
      const double r = rad_residual(s, y_hat);
      loss += w.lambda_rad * std::abs(r);
      if (r != 0.0) {
        const Vec3 rel = s.x_ti - s.radar_origin;
        const Vec3 u = rel / rel.norm();
        const double sgn = r > 0.0 ? 1.0 : -1.0;
        dy += (w.lambda_rad * sgn) * (s.T_j_to_i.rotation.transpose() * u);
      }
    }
    if (grad) {
      const Vec3 g = backward_forward_pass(f, tape_fwd, dy * f.radius, grad->data());
      backward_inverse_pass(f, tape_inv, g, grad->data());
    }
  }
  return loss;
}

std::vector<std::uint32_t> all_indices(std::size_t n) {
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = std::uint32_t(i);
  return idx;
}

RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= double(src.size());
  cd /= double(src.size());

  Mat3 cov_src = Mat3::Zero();  // spread of the source points, for the rank check
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    const Vec3 b = dst[i] - cd;
    cov_src += a * a.transpose();
    h += a * b.transpose();
  }
  Eigen::JacobiSVD<Mat3> spread(cov_src);
  if (spread.singularValues()(1) < 1e-9 * std::max(1.0, spread.singularValues()(0))) {
    throw Error(ErrorCode::DegenerateCorrespondences, "correspondences are collinear");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = cd - out.rotation * cs;
  return out;
}

}  // namespace

Vec3 warp(const DeformationField& field, const Vec3& x, double t_i, double t_j) {
  return field.warp(x, t_i, t_j);
}

CouplingField CouplingField::make(int n_layers, std::uint64_t seed) {
  CouplingField f;
  f.n_layers = n_layers;
  f.params = Eigen::VectorXd::Zero(f.param_count());
  SplitMix64 rng(seed);
  const double s1 = 1.0 / std::sqrt(double(kCI));
  const double s2 = 1.0 / std::sqrt(double(kH));
  for (int l = 0; l < n_layers; ++l) {
    double* p = f.params.data() + std::size_t(l) * params_per_layer();
    for (int i = 0; i < kH * kCI; ++i) p[kOffW1 + i] = rng.uniform(-s1, s1);
    for (int i = 0; i < kH * kH; ++i) p[kOffW2 + i] = rng.uniform(-s2, s2);
    // W3 and all biases stay zero: the field starts as the identity map.
  }
  return f;
}

CouplingField CouplingField::init_for_samples(std::span<const SceneFlowSample> samples,
                                              int n_layers, std::uint64_t seed) {
  CouplingField f = make(n_layers, seed);
  if (samples.empty()) return f;
  Vec3 lo = samples.front().x_ti, hi = lo;
  double t_lo = samples.front().t_i, t_hi = samples.front().t_j;
  for (const SceneFlowSample& s : samples) {
    lo = lo.cwiseMin(s.x_ti).cwiseMin(s.x_tj);
    hi = hi.cwiseMax(s.x_ti).cwiseMax(s.x_tj);
    t_lo = std::min({t_lo, s.t_i, s.t_j});
    t_hi = std::max({t_hi, s.t_i, s.t_j});
  }
  f.center = 0.5 * (lo + hi);
  f.radius = std::max(0.5 * (hi - lo).norm(), 1e-3);
  f.time_origin = t_lo;
  f.time_span = std::max(t_hi - t_lo, 1e-9);
  return f;
}

Vec3 CouplingField::forward(const Vec3& x, double t) const {
  const Vec3 xn = (x - center) / radius;
  return run_forward_pass(*this, xn, t, nullptr) * radius + center;
}

Vec3 CouplingField::inverse(const Vec3& y, double t) const {
  const Vec3 yn = (y - center) / radius;
  return run_inverse_pass(*this, yn, t, nullptr) * radius + center;
}

Vec3 CouplingField::warp(const Vec3& x, double t_i, double t_j) const {
  const Vec3 xn = (x - center) / radius;
  const Vec3 zn = run_inverse_pass(*this, xn, t_i, nullptr);
  return run_forward_pass(*this, zn, t_j, nullptr) * radius + center;
}

RigidTransform RigidTrajectoryField::pose_at(double t) const {
  if (times.empty()) return RigidTransform::identity();
  if (t <= times.front()) return poses.front();
  if (t >= times.back()) return poses.back();
  std::size_t k = std::size_t(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
  k = std::min(k, times.size() - 2);
  const double alpha = (t - times[k]) / (times[k + 1] - times[k]);
  const Eigen::Quaterniond qa(poses[k].rotation);
  const Eigen::Quaterniond qb(poses[k + 1].rotation);
  RigidTransform out;
  out.rotation = qa.slerp(alpha, qb).toRotationMatrix();
  out.translation = (1.0 - alpha) * poses[k].translation + alpha * poses[k + 1].translation;
  return out;
}

double flow_residual_sq(const SceneFlowSample& s, const Vec3& x_hat_tj) {
  return (x_hat_tj - s.x_tj).squaredNorm();
}

double rad_residual(const SceneFlowSample& s, const Vec3& x_hat_tj) {
  if (!s.radial_velocity) {
    throw Error(ErrorCode::MissingRadialVelocity, "sample lacks a radial velocity");
  }
  const Vec3 rel = s.x_ti - s.radar_origin;
  const double dist = rel.norm();
  if (dist <= 0.1) {
    throw Error(ErrorCode::SampleAtRadarOrigin,
                "sample is " + std::to_string(dist) + " m from the radar center");
  }
  const Vec3 flow = s.T_j_to_i * x_hat_tj - s.x_ti;
  return flow.dot(rel / dist) - *s.radial_velocity * (s.t_j - s.t_i);
}

double loss_flow(const DeformationField& field, std::span<const SceneFlowSample> samples) {
  double loss = 0.0;
  for (const SceneFlowSample& s : samples) {
    const Vec3 y_hat = field.warp(s.x_ti, field.normalize_time(s.t_i), field.normalize_time(s.t_j));
    loss += flow_residual_sq(s, y_hat);
  }
  return loss;
}

double loss_rad(const DeformationField& field, std::span<const SceneFlowSample> samples) {
  double loss = 0.0;
  for (const SceneFlowSample& s : samples) {
    const Vec3 y_hat = field.warp(s.x_ti, field.normalize_time(s.t_i), field.normalize_time(s.t_j));
    loss += std::abs(rad_residual(s, y_hat));
  }
  return loss;
}

double total_loss(const DeformationField& field, std::span<const SceneFlowSample> samples,
                  const LossWeights& weights) {
  double loss = 0.0;
  for (const SceneFlowSample& s : samples) {
    const Vec3 y_hat = field.warp(s.x_ti, field.normalize_time(s.t_i), field.normalize_time(s.t_j));
    loss += weights.lambda_flow * flow_residual_sq(s, y_hat);
    if (s.radial_velocity) {
      loss += weights.lambda_rad * std::abs(rad_residual(s, y_hat));
    }
  }
  return loss;
}

Eigen::VectorXd gradients(const CouplingField& field, std::span<const SceneFlowSample> samples,
                          const LossWeights& weights) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(field.param_count());
  const auto idx = all_indices(samples.size());
  evaluate_batch(field, samples, idx, weights, &grad);
  return grad;
}

FitResult fit(CouplingField field, std::span<const SceneFlowSample> samples,
              const TrainConfig& cfg) {
  if (samples.empty()) {
    throw Error(ErrorCode::TooFewPoints, "fit needs at least one sample");
  }
  if (!(cfg.learning_rate > 0.0) || cfg.lambda_flow < 0.0 || cfg.lambda_rad < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate > 0 and non-negative weights required");
  }

  const int np = field.param_count();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd grad(np);
  const LossWeights w{cfg.lambda_flow, cfg.lambda_rad};
  const std::size_t n = samples.size();
  const auto full = all_indices(n);

  FitResult result;
  result.loss_history.reserve(cfg.iterations);

  for (std::uint32_t it = 0; it < cfg.iterations; ++it) {
    std::vector<std::uint32_t> batch;
    const std::span<const std::uint32_t> idx = [&]() -> std::span<const std::uint32_t> {
      if (cfg.batch_size >= n) return full;
      SplitMix64 rng(derive_seed(cfg.seed, "fit-batch", it + 1));
      batch = sample_without_replacement(std::uint32_t(n), cfg.batch_size, rng);
      return batch;
    }();

    grad.setZero();
    const double loss = evaluate_batch(field, samples, idx, w, &grad);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::NonFiniteLoss,
                  "objective diverged at iteration " + std::to_string(it));
    }
    result.loss_history.push_back(loss);

    // A numerically-zero batch objective only carries float-noise gradients;
    // Adam would still take lr-sized steps on them (the gradient scales as
    // sqrt(loss), so noise looks like signal) and walk away from an optimum.
    if (loss <= 1e-14) continue;

    const double bc1 = 1.0 - std::pow(cfg.adam.beta1, double(it + 1));
    const double bc2 = 1.0 - std::pow(cfg.adam.beta2, double(it + 1));
    m = cfg.adam.beta1 * m + (1.0 - cfg.adam.beta1) * grad;
    v = cfg.adam.beta2 * v + (1.0 - cfg.adam.beta2) * grad.cwiseProduct(grad);
    field.params.array() -=
        cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam.epsilon);
  }
  result.field = std::move(field);
  return result;
}

RigidTrajectoryField fit_rigid(std::span<const SceneFlowSample> samples,
                               const std::vector<double>& timestamps_seconds) {
  if (timestamps_seconds.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "need at least two timestamps");
  }
  std::vector<double> ts = timestamps_seconds;
  std::sort(ts.begin(), ts.end());

  RigidTrajectoryField field;
  field.time_origin = ts.front();
  field.time_span = std::max(ts.back() - ts.front(), 1e-9);

  const std::size_t n = ts.size();
  std::vector<RigidTransform> step(n - 1);  // frame k -> frame k+1
  for (std::size_t k = 0; k + 1 < n; ++k) {
    std::vector<Vec3> src, dst;
    for (const SceneFlowSample& s : samples) {
      if (std::abs(s.t_i - ts[k]) < 1e-9 && std::abs(s.t_j - ts[k + 1]) < 1e-9) {
        src.push_back(s.x_ti);
        dst.push_back(s.x_tj);
      }
    }
    if (src.size() < 3) {
      throw Error(ErrorCode::DegenerateCorrespondences,
                  "pair " + std::to_string(k) + " has " + std::to_string(src.size()) +
                      " correspondences");
    }
    step[k] = kabsch(src, dst);
  }

  const std::size_t canonical = (n - 1) / 2;
  std::vector<RigidTransform> poses(n);
  poses[canonical] = RigidTransform::identity();
  for (std::size_t k = canonical; k + 1 < n; ++k) poses[k + 1] = step[k] * poses[k];
  for (std::size_t k = canonical; k > 0; --k) poses[k - 1] = step[k - 1].inverse() * poses[k];

  field.times.resize(n);
  for (std::size_t k = 0; k < n; ++k) field.times[k] = field.normalize_time(ts[k]);
  field.poses = std::move(poses);
  return field;
}

}  // namespace radarflow
