#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace radarflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

enum class ErrorCode {
  OutOfBounds,
  NonPositiveDepth,
  BehindCamera,
  TooFewPoints,
  NoConsensus,
  ZeroNorm,
  DegeneratePlane,
  UnstableDenominator,
  NonPositiveScale,
  NoStaticPoints,
  NoValidSamples,
  DimensionMismatch,
  NoDynamicRadarPoints,
  MissingRadialVelocity,
  SampleAtRadarOrigin,
  NonFiniteLoss,
  DegenerateCorrespondences,
  InvalidConfig,
  LengthMismatch,
  BadMagic,
  TruncatedFile,
  DimensionOverflow,
  ParseError,
  NonMonotonicTimestamps,
  ScaleStateMismatch,
  IoError,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// SE(3) pose/transform. `T * p` maps a point, `A * B` composes (apply B, then A).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  bool is_rigid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static RigidTransform from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }
};

/// Pinhole camera. Camera frame: +z forward, +x right, +y down; depth is z-depth.
/// cam_from_ego maps ego/body coordinates (+x forward, +y left, +z up) into the
/// camera frame. Pixel (u, v) addresses the ray through exactly (u, v); rasters
/// are sampled at integer positions, no half-pixel offset.
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::uint32_t width = 0, height = 0;
  RigidTransform cam_from_ego;

  bool contains(double u, double v) const {
    return u >= 0.0 && u <= double(width) - 1.0 && v >= 0.0 && v <= double(height) - 1.0;
  }
};

/// One radar return in the sensor frame. radial_velocity is the range rate:
/// positive when the range is increasing.
struct RadarPoint {
  Vec3 position = Vec3::Zero();
  double radial_velocity = 0.0;
};

struct RadarFrame {
  double timestamp = 0.0;  // seconds
  RigidTransform sensor_from_world;
  std::vector<RadarPoint> points;
};

enum class ScaleState { Relative, Metric };

/// Dense z-depth grid, row-major. 0 encodes an invalid pixel; valid depths are > 0.
struct DepthImage {
  std::uint32_t width = 0, height = 0;
  std::vector<double> data;
  ScaleState scale_state = ScaleState::Relative;

  static DepthImage zeros(std::uint32_t w, std::uint32_t h,
                          ScaleState state = ScaleState::Relative) {
    DepthImage img;
    img.width = w;
    img.height = h;
    img.data.assign(std::size_t(w) * h, 0.0);
    img.scale_state = state;
    return img;
  }

  double at(std::uint32_t u, std::uint32_t v) const { return data[std::size_t(v) * width + u]; }
  double& at(std::uint32_t u, std::uint32_t v) { return data[std::size_t(v) * width + u]; }
  bool valid(std::uint32_t u, std::uint32_t v) const { return at(u, v) > 0.0; }
};

Vec3 back_project(const CameraModel& cam, double u, double v, double depth);
Vec2 project(const CameraModel& cam, const Vec3& p_cam);

/// Bilinear z-depth at a subpixel position; nullopt if out of bounds or any of
/// the four taps is invalid.
std::optional<double> sample_depth_bilinear(const DepthImage& depth, double u, double v);

}  // namespace radarflow
