#include "radarflow/core.hpp"

#include <cmath>

namespace radarflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::UnstableDenominator: return "UnstableDenominator";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::NoStaticPoints: return "NoStaticPoints";
    case ErrorCode::NoValidSamples: return "NoValidSamples";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoDynamicRadarPoints: return "NoDynamicRadarPoints";
    case ErrorCode::MissingRadialVelocity: return "MissingRadialVelocity";
    case ErrorCode::SampleAtRadarOrigin: return "SampleAtRadarOrigin";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateCorrespondences: return "DegenerateCorrespondences";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimensionOverflow: return "DimensionOverflow";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::ScaleStateMismatch: return "ScaleStateMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Vec3 back_project(const CameraModel& cam, double u, double v, double depth) {
  if (!cam.contains(u, v)) {
    throw Error(ErrorCode::OutOfBounds, "pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                                            ") outside " + std::to_string(cam.width) + "x" +
                                            std::to_string(cam.height) + " image");
  }
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "depth = " + std::to_string(depth));
  }
  return {(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth};
}

Vec2 project(const CameraModel& cam, const Vec3& p_cam) {
  if (p_cam.z() <= 1e-6) {
    throw Error(ErrorCode::BehindCamera, "z = " + std::to_string(p_cam.z()));
  }
  return {cam.fx * p_cam.x() / p_cam.z() + cam.cx, cam.fy * p_cam.y() / p_cam.z() + cam.cy};
}

std::optional<double> sample_depth_bilinear(const DepthImage& depth, double u, double v) {
  if (depth.width < 2 || depth.height < 2) return std::nullopt;
  if (u < 0.0 || v < 0.0 || u > double(depth.width) - 1.0 || v > double(depth.height) - 1.0) {
    return std::nullopt;
  }
  // Clamp the base tap so u == width-1 stays inside the grid with fu == 1.
  std::uint32_t u0 = std::min(std::uint32_t(u), depth.width - 2);
  std::uint32_t v0 = std::min(std::uint32_t(v), depth.height - 2);
  const double fu = u - double(u0);
  const double fv = v - double(v0);
  const double d00 = depth.at(u0, v0);
  const double d10 = depth.at(u0 + 1, v0);
  const double d01 = depth.at(u0, v0 + 1);
  const double d11 = depth.at(u0 + 1, v0 + 1);
  if (d00 <= 0.0 || d10 <= 0.0 || d01 <= 0.0 || d11 <= 0.0) return std::nullopt;
  return (1.0 - fv) * ((1.0 - fu) * d00 + fu * d10) + fv * ((1.0 - fu) * d01 + fu * d11);
}

}  // namespace radarflow
