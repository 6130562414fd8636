#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "radarflow/core.hpp"
#include "radarflow/deformation.hpp"
#include "radarflow/ego_motion.hpp"
#include "radarflow/flow_lift.hpp"
#include "radarflow/scale_recovery.hpp"
#include "radarflow/segmentation.hpp"
#include "radarflow/simulator.hpp"

namespace radarflow::io {

using Path = std::filesystem::path;
using Json = nlohmann::json;

/// Reject unknown keys: every key of obj must appear in allowed.
void require_keys(const Json& obj, std::initializer_list<const char*> allowed,
                  const std::string& context);

// --- binary rasters -------------------------------------------------------

// DPF1: "DPF1", u32le width, u32le height, u8 scale_state (0 relative,
// 1 metric), then width*height f32le row-major z-depths, 0.0 = invalid.
void write_depth(const Path& path, const DepthImage& depth);
DepthImage read_depth(const Path& path);

// FLW1: "FLW1", u32le width, u32le height, then interleaved (f32 du, f32 dv)
// row-major.
void write_flow(const Path& path, const FlowImage& flow);
FlowImage read_flow(const Path& path);

// Binary PGM (P5), 0 or 255.
void write_mask_pgm(const Path& path, const DynamicMask& mask);
DynamicMask read_mask_pgm(const Path& path);

// ASCII PLY point cloud, properties x y z and optionally vr.
void write_ply(const Path& path, const std::vector<Vec3>& points,
               const std::vector<double>* radial_velocities = nullptr);

// --- JSON / JSON Lines ----------------------------------------------------

// Radar frames, one JSON object per line:
//   {"points": [[x,y,z,vr], ...], "sensor_from_world": [16 row-major], "t": seconds}
// Canonical serialization: sorted keys, shortest round-trip floats.
void write_radar_jsonl(const Path& path, const std::vector<RadarFrame>& frames);
std::vector<RadarFrame> read_radar_jsonl(const Path& path);
std::string radar_frame_to_json_line(const RadarFrame& frame);

void write_samples_jsonl(const Path& path, const std::vector<SceneFlowSample>& samples);
std::vector<SceneFlowSample> read_samples_jsonl(const Path& path);

struct EgoRecord {
  double timestamp = 0.0;
  EgoMotionEstimate estimate;
};
void write_ego_jsonl(const Path& path, const std::vector<EgoRecord>& records);
std::vector<EgoRecord> read_ego_jsonl(const Path& path);

void write_labels_jsonl(const Path& path, const std::vector<std::vector<bool>>& labels);
std::vector<std::vector<bool>> read_labels_jsonl(const Path& path);

void write_camera_json(const Path& path, const CameraModel& cam);
CameraModel read_camera_json(const Path& path);

Json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const Json& j);
void write_scene_config(const Path& path, const SceneConfig& cfg);
SceneConfig read_scene_config(const Path& path);

RansacConfig ransac_config_from_json(const Json& j);
Json ransac_config_to_json(const RansacConfig& cfg);
ScaleConfig scale_config_from_json(const Json& j);
Json scale_config_to_json(const ScaleConfig& cfg);
TrainConfig train_config_from_json(const Json& j);
Json train_config_to_json(const TrainConfig& cfg);

void write_field_json(const Path& path, const CouplingField& field);
CouplingField read_field_json(const Path& path);

Json metrics_to_json(const MetricsReport& report);
std::string metrics_to_csv(const MetricsReport& report);

// --- misc -----------------------------------------------------------------

Json load_json(const Path& path);
void save_json(const Path& path, const Json& j);
void save_text(const Path& path, const std::string& text);

}  // namespace radarflow::io
