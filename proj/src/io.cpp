#include "radarflow/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace radarflow::io {
namespace {

void put_u32le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                              (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32le(std::ostream& os, float f) { put_u32le(os, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32le(std::istream& is, const Path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorCode::TruncatedFile, path.string());
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

float get_f32le(std::istream& is, const Path& path) {
  return std::bit_cast<float>(get_u32le(is, path));
}

std::ofstream open_out(const Path& path, std::ios::openmode mode = std::ios::binary) {
  std::ofstream os(path, mode);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const Path& path, std::ios::openmode mode = std::ios::binary) {
  std::ifstream is(path, mode);
  if (!is) throw Error(ErrorCode::IoError, "cannot open for reading: " + path.string());
  return is;
}

void check_magic(std::istream& is, const char* magic, const Path& path) {
  char buf[4];
  if (!is.read(buf, 4)) throw Error(ErrorCode::TruncatedFile, path.string());
  if (std::memcmp(buf, magic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "expected " + std::string(magic, 4) + " in " + path.string());
  }
}

void check_pixel_count(std::uint32_t w, std::uint32_t h, const Path& path) {
  if (std::uint64_t(w) * std::uint64_t(h) > (std::uint64_t(1) << 31)) {
    throw Error(ErrorCode::DimensionOverflow,
                std::to_string(w) + "x" + std::to_string(h) + " in " + path.string());
  }
}

double json_number(const Json& j, const char* key, const std::string& context) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw Error(ErrorCode::ParseError, context + ": missing or non-numeric '" + key + "'");
  }
  return j[key].get<double>();
}

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number()) {
    throw Error(ErrorCode::ParseError, context + ": expected [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json transform_to_json(const RigidTransform& t) {
  const Mat4 m = t.matrix();
  Json a = Json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
  }
  return a;
}

RigidTransform transform_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 16) {
    throw Error(ErrorCode::ParseError, context + ": expected 16 row-major values");
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const Json& e = j[std::size_t(4 * r + c)];
      if (!e.is_number()) throw Error(ErrorCode::ParseError, context + ": non-numeric entry");
      m(r, c) = e.get<double>();
    }
  }
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error(ErrorCode::ParseError, context + ": bottom row must be [0, 0, 0, 1]");
  }
  return RigidTransform::from_matrix(m);
}

}  // namespace

void require_keys(const Json& obj, std::initializer_list<const char*> allowed,
                  const std::string& context) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(ErrorCode::ParseError, context + ": unknown key '" + key + "'");
  }
}

void write_depth(const Path& path, const DepthImage& depth) {
  check_pixel_count(depth.width, depth.height, path);
  auto os = open_out(path);
  os.write("DPF1", 4);
  put_u32le(os, depth.width);
  put_u32le(os, depth.height);
  const unsigned char state = depth.scale_state == ScaleState::Metric ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&state), 1);
  for (double d : depth.data) put_f32le(os, float(d));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

DepthImage read_depth(const Path& path) {
  auto is = open_in(path);
  check_magic(is, "DPF1", path);
  DepthImage depth;
  depth.width = get_u32le(is, path);
  depth.height = get_u32le(is, path);
  check_pixel_count(depth.width, depth.height, path);
  char state;
  if (!is.read(&state, 1)) throw Error(ErrorCode::TruncatedFile, path.string());
  depth.scale_state = state == 1 ? ScaleState::Metric : ScaleState::Relative;
  depth.data.resize(std::size_t(depth.width) * depth.height);
  for (double& d : depth.data) d = double(get_f32le(is, path));
  return depth;
}

void write_flow(const Path& path, const FlowImage& flow) {
  check_pixel_count(flow.width, flow.height, path);
  auto os = open_out(path);
  os.write("FLW1", 4);
  put_u32le(os, flow.width);
  put_u32le(os, flow.height);
  for (double d : flow.data) put_f32le(os, float(d));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

FlowImage read_flow(const Path& path) {
  auto is = open_in(path);
  check_magic(is, "FLW1", path);
  FlowImage flow;
  flow.width = get_u32le(is, path);
  flow.height = get_u32le(is, path);
  check_pixel_count(flow.width, flow.height, path);
  flow.data.resize(2 * std::size_t(flow.width) * flow.height);
  for (double& d : flow.data) d = double(get_f32le(is, path));
  return flow;
}

void write_mask_pgm(const Path& path, const DynamicMask& mask) {
  auto os = open_out(path);
  os << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<unsigned char> row(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) row[i] = mask.data[i] ? 255 : 0;
  os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

DynamicMask read_mask_pgm(const Path& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw Error(ErrorCode::BadMagic, "expected P5 in " + path.string());
  std::uint64_t w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || maxval == 0 || maxval > 255) {
    throw Error(ErrorCode::ParseError, "bad PGM header in " + path.string());
  }
  is.get();  // single whitespace after maxval
  DynamicMask mask = DynamicMask::zeros(std::uint32_t(w), std::uint32_t(h));
  std::vector<unsigned char> row(mask.data.size());
  if (!is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()))) {
    throw Error(ErrorCode::TruncatedFile, path.string());
  }
  for (std::size_t i = 0; i < row.size(); ++i) mask.data[i] = row[i] > 127 ? 1 : 0;
  return mask;
}

void write_ply(const Path& path, const std::vector<Vec3>& points,
               const std::vector<double>* radial_velocities) {
  if (radial_velocities && radial_velocities->size() != points.size()) {
    throw Error(ErrorCode::LengthMismatch, "vr count != point count");
  }
  auto os = open_out(path, std::ios::out);
  os << "ply\nformat ascii 1.0\nelement vertex " << points.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\n";
  if (radial_velocities) os << "property double vr\n";
  os << "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    os << Json(points[i].x()).dump() << " " << Json(points[i].y()).dump() << " "
       << Json(points[i].z()).dump();
    if (radial_velocities) os << " " << Json((*radial_velocities)[i]).dump();
    os << "\n";
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string radar_frame_to_json_line(const RadarFrame& frame) {
  Json j;
  j["t"] = frame.timestamp;
  j["sensor_from_world"] = transform_to_json(frame.sensor_from_world);
  Json pts = Json::array();
  for (const RadarPoint& p : frame.points) {
    pts.push_back(Json::array(
        {p.position.x(), p.position.y(), p.position.z(), p.radial_velocity}));
  }
  j["points"] = std::move(pts);
  return j.dump();
}

void write_radar_jsonl(const Path& path, const std::vector<RadarFrame>& frames) {
  auto os = open_out(path, std::ios::out);
  for (const RadarFrame& f : frames) os << radar_frame_to_json_line(f) << "\n";
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<RadarFrame> read_radar_jsonl(const Path& path) {
  auto is = open_in(path, std::ios::in);
  std::vector<RadarFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    require_keys(j, {"t", "sensor_from_world", "points"}, where);
    RadarFrame frame;
    frame.timestamp = json_number(j, "t", where);
    if (!std::isfinite(frame.timestamp)) {
      throw Error(ErrorCode::ParseError, where + ": non-finite timestamp");
    }
    if (frame.timestamp <= prev_t) {
      throw Error(ErrorCode::NonMonotonicTimestamps,
                  where + ": timestamp " + std::to_string(frame.timestamp) +
                      " does not increase");
    }
    prev_t = frame.timestamp;
    if (!j.contains("sensor_from_world")) {
      throw Error(ErrorCode::ParseError, where + ": missing sensor_from_world");
    }
    frame.sensor_from_world = transform_from_json(j["sensor_from_world"], where);
    if (!j.contains("points") || !j["points"].is_array()) {
      throw Error(ErrorCode::ParseError, where + ": missing points array");
    }
    for (const Json& p : j["points"]) {
      if (!p.is_array() || p.size() != 4 || !p[0].is_number() || !p[1].is_number() ||
          !p[2].is_number() || !p[3].is_number()) {
        throw Error(ErrorCode::ParseError, where + ": point must be [x, y, z, vr] numbers");
      }
      RadarPoint pt;
      pt.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
      pt.radial_velocity = p[3].get<double>();
      if (!pt.position.allFinite() || !std::isfinite(pt.radial_velocity)) {
        throw Error(ErrorCode::ParseError, where + ": non-finite point field");
      }
      if (pt.position.norm() <= 0.1) {
        throw Error(ErrorCode::ParseError, where + ": point within 0.1 m of the sensor");
      }
      frame.points.push_back(pt);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

void write_samples_jsonl(const Path& path, const std::vector<SceneFlowSample>& samples) {
  auto os = open_out(path, std::ios::out);
  for (const SceneFlowSample& s : samples) {
    Json j;
    j["x_ti"] = vec3_to_json(s.x_ti);
    j["x_tj"] = vec3_to_json(s.x_tj);
    j["t_i"] = s.t_i;
    j["t_j"] = s.t_j;
    j["radar_origin"] = vec3_to_json(s.radar_origin);
    j["vr"] = s.radial_velocity ? Json(*s.radial_velocity) : Json(nullptr);
    j["T_j_to_i"] = transform_to_json(s.T_j_to_i);
    j["src"] = Json::array({s.src_u, s.src_v});
    os << j.dump() << "\n";
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<SceneFlowSample> read_samples_jsonl(const Path& path) {
  auto is = open_in(path, std::ios::in);
  std::vector<SceneFlowSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    require_keys(j, {"x_ti", "x_tj", "t_i", "t_j", "radar_origin", "vr", "T_j_to_i", "src"},
                 where);
    SceneFlowSample s;
    s.x_ti = vec3_from_json(j.at("x_ti"), where);
    s.x_tj = vec3_from_json(j.at("x_tj"), where);
    s.t_i = json_number(j, "t_i", where);
    s.t_j = json_number(j, "t_j", where);
    s.radar_origin = vec3_from_json(j.at("radar_origin"), where);
    if (j.contains("vr") && j["vr"].is_number()) s.radial_velocity = j["vr"].get<double>();
    s.T_j_to_i = transform_from_json(j.at("T_j_to_i"), where);
    if (j.contains("src") && j["src"].is_array() && j["src"].size() == 2) {
      s.src_u = j["src"][0].get<std::int32_t>();
      s.src_v = j["src"][1].get<std::int32_t>();
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_ego_jsonl(const Path& path, const std::vector<EgoRecord>& records) {
  auto os = open_out(path, std::ios::out);
  for (const EgoRecord& r : records) {
    Json j;
    j["t"] = r.timestamp;
    j["velocity"] = vec3_to_json(r.estimate.velocity);
    j["inliers"] = r.estimate.inlier_indices;
    j["rms_residual"] = r.estimate.rms_residual;
    j["rank_deficient"] = r.estimate.rank_deficient;
    os << j.dump() << "\n";
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<EgoRecord> read_ego_jsonl(const Path& path) {
  auto is = open_in(path, std::ios::in);
  std::vector<EgoRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    EgoRecord r;
    r.timestamp = json_number(j, "t", where);
    r.estimate.velocity = vec3_from_json(j.at("velocity"), where);
    if (j.contains("inliers")) {
      r.estimate.inlier_indices = j["inliers"].get<std::vector<std::uint32_t>>();
    }
    if (j.contains("rms_residual")) r.estimate.rms_residual = j["rms_residual"].get<double>();
    if (j.contains("rank_deficient")) r.estimate.rank_deficient = j["rank_deficient"].get<bool>();
    records.push_back(std::move(r));
  }
  return records;
}

void write_labels_jsonl(const Path& path, const std::vector<std::vector<bool>>& labels) {
  auto os = open_out(path, std::ios::out);
  for (const auto& frame : labels) {
    Json a = Json::array();
    for (bool b : frame) a.push_back(b ? 1 : 0);
    os << a.dump() << "\n";
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<std::vector<bool>> read_labels_jsonl(const Path& path) {
  auto is = open_in(path, std::ios::in);
  std::vector<std::vector<bool>> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::vector<bool> frame;
    for (const Json& e : j) frame.push_back(e.get<int>() != 0);
    labels.push_back(std::move(frame));
  }
  return labels;
}

void write_camera_json(const Path& path, const CameraModel& cam) {
  Json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["cam_from_ego"] = transform_to_json(cam.cam_from_ego);
  save_json(path, j);
}

CameraModel read_camera_json(const Path& path) {
  const Json j = load_json(path);
  const std::string where = path.string();
  require_keys(j, {"fx", "fy", "cx", "cy", "width", "height", "cam_from_ego"}, where);
  CameraModel cam;
  cam.fx = json_number(j, "fx", where);
  cam.fy = json_number(j, "fy", where);
  cam.cx = json_number(j, "cx", where);
  cam.cy = json_number(j, "cy", where);
  cam.width = std::uint32_t(json_number(j, "width", where));
  cam.height = std::uint32_t(json_number(j, "height", where));
  cam.cam_from_ego = transform_from_json(j.at("cam_from_ego"), where);
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0) || cam.cx < 0.0 || cam.cx >= double(cam.width) ||
      cam.cy < 0.0 || cam.cy >= double(cam.height)) {
    throw Error(ErrorCode::ParseError, where + ": camera intrinsics violate invariants");
  }
  return cam;
}

Json scene_config_to_json(const SceneConfig& cfg) {
  Json j;
  j["duration"] = cfg.duration;
  j["frame_rate"] = cfg.frame_rate;
  j["ego_height"] = cfg.ego_height;
  Json segs = Json::array();
  for (const EgoSegment& s : cfg.ego_segments) {
    segs.push_back({{"duration", s.duration}, {"speed", s.speed}, {"yaw_rate", s.yaw_rate}});
  }
  j["ego_segments"] = std::move(segs);
  j["ground_plane"] = cfg.ground_plane;
  Json stat = Json::array();
  for (const BoxSpec& b : cfg.static_boxes) {
    stat.push_back({{"center", vec3_to_json(b.center)},
                    {"half_extents", vec3_to_json(b.half_extents)}});
  }
  j["static_boxes"] = std::move(stat);
  Json dyn = Json::array();
  for (const DynamicBoxSpec& b : cfg.dynamic_boxes) {
    dyn.push_back({{"center0", vec3_to_json(b.center0)},
                   {"half_extents", vec3_to_json(b.half_extents)},
                   {"velocity", vec3_to_json(b.velocity)}});
  }
  j["dynamic_boxes"] = std::move(dyn);
  j["radar"] = {{"azimuth_fov_deg", cfg.radar.azimuth_fov_deg},
                {"elevation_fov_deg", cfg.radar.elevation_fov_deg},
                {"max_range", cfg.radar.max_range},
                {"points_per_frame", cfg.radar.points_per_frame},
                {"sigma_p", cfg.radar.sigma_p},
                {"sigma_v", cfg.radar.sigma_v}};
  j["camera"] = {{"fx", cfg.camera.fx},
                 {"fy", cfg.camera.fy},
                 {"cx", cfg.camera.cx},
                 {"cy", cfg.camera.cy},
                 {"width", cfg.camera.width},
                 {"height", cfg.camera.height},
                 {"cam_from_ego", transform_to_json(cfg.camera.cam_from_ego)}};
  j["relative_depth_scale"] = cfg.relative_depth_scale;
  j["seed"] = cfg.seed;
  return j;
}

SceneConfig scene_config_from_json(const Json& j) {
  const std::string where = "scene config";
  require_keys(j,
               {"duration", "frame_rate", "ego_height", "ego_segments", "ground_plane",
                "static_boxes", "dynamic_boxes", "radar", "camera", "relative_depth_scale",
                "seed"},
               where);
  SceneConfig cfg = SceneConfig::default_test_scene();
  if (j.contains("duration")) cfg.duration = j["duration"].get<double>();
  if (j.contains("frame_rate")) cfg.frame_rate = j["frame_rate"].get<double>();
  if (j.contains("ego_height")) cfg.ego_height = j["ego_height"].get<double>();
  if (j.contains("ego_segments")) {
    cfg.ego_segments.clear();
    for (const Json& s : j["ego_segments"]) {
      require_keys(s, {"duration", "speed", "yaw_rate"}, where + ".ego_segments");
      EgoSegment seg;
      seg.duration = s.value("duration", 0.0);
      seg.speed = s.value("speed", 0.0);
      seg.yaw_rate = s.value("yaw_rate", 0.0);
      cfg.ego_segments.push_back(seg);
    }
  }
  if (j.contains("ground_plane")) cfg.ground_plane = j["ground_plane"].get<bool>();
  if (j.contains("static_boxes")) {
    cfg.static_boxes.clear();
    for (const Json& b : j["static_boxes"]) {
      require_keys(b, {"center", "half_extents"}, where + ".static_boxes");
      cfg.static_boxes.push_back(
          {vec3_from_json(b.at("center"), where), vec3_from_json(b.at("half_extents"), where)});
    }
  }
  if (j.contains("dynamic_boxes")) {
    cfg.dynamic_boxes.clear();
    for (const Json& b : j["dynamic_boxes"]) {
      require_keys(b, {"center0", "half_extents", "velocity"}, where + ".dynamic_boxes");
      cfg.dynamic_boxes.push_back({vec3_from_json(b.at("center0"), where),
                                   vec3_from_json(b.at("half_extents"), where),
                                   vec3_from_json(b.at("velocity"), where)});
    }
  }
  if (j.contains("radar")) {
    const Json& r = j["radar"];
    require_keys(r,
                 {"azimuth_fov_deg", "elevation_fov_deg", "max_range", "points_per_frame",
                  "sigma_p", "sigma_v"},
                 where + ".radar");
    cfg.radar.azimuth_fov_deg = r.value("azimuth_fov_deg", cfg.radar.azimuth_fov_deg);
    cfg.radar.elevation_fov_deg = r.value("elevation_fov_deg", cfg.radar.elevation_fov_deg);
    cfg.radar.max_range = r.value("max_range", cfg.radar.max_range);
    cfg.radar.points_per_frame = r.value("points_per_frame", cfg.radar.points_per_frame);
    cfg.radar.sigma_p = r.value("sigma_p", cfg.radar.sigma_p);
    cfg.radar.sigma_v = r.value("sigma_v", cfg.radar.sigma_v);
  }
  if (j.contains("camera")) {
    const Json& c = j["camera"];
    require_keys(c, {"fx", "fy", "cx", "cy", "width", "height", "cam_from_ego"},
                 where + ".camera");
    cfg.camera.fx = c.value("fx", cfg.camera.fx);
    cfg.camera.fy = c.value("fy", cfg.camera.fy);
    cfg.camera.cx = c.value("cx", cfg.camera.cx);
    cfg.camera.cy = c.value("cy", cfg.camera.cy);
    cfg.camera.width = c.value("width", cfg.camera.width);
    cfg.camera.height = c.value("height", cfg.camera.height);
    if (c.contains("cam_from_ego")) {
      cfg.camera.cam_from_ego = transform_from_json(c["cam_from_ego"], where + ".camera");
    }
  }
  if (j.contains("relative_depth_scale")) {
    cfg.relative_depth_scale = j["relative_depth_scale"].get<double>();
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  return cfg;
}

void write_scene_config(const Path& path, const SceneConfig& cfg) {
  save_json(path, scene_config_to_json(cfg));
}

SceneConfig read_scene_config(const Path& path) { return scene_config_from_json(load_json(path)); }

RansacConfig ransac_config_from_json(const Json& j) {
  require_keys(j, {"iterations", "inlier_threshold", "min_inliers", "seed"}, "ransac config");
  RansacConfig cfg;
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.inlier_threshold = j.value("inlier_threshold", cfg.inlier_threshold);
  cfg.min_inliers = j.value("min_inliers", cfg.min_inliers);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

Json ransac_config_to_json(const RansacConfig& cfg) {
  return {{"iterations", cfg.iterations},
          {"inlier_threshold", cfg.inlier_threshold},
          {"min_inliers", cfg.min_inliers},
          {"seed", cfg.seed}};
}

ScaleConfig scale_config_from_json(const Json& j) {
  require_keys(j,
               {"max_spherical_spread", "max_depth_ratio", "min_normal_dot", "hist_min",
                "hist_max", "hist_bins", "subsample_stride"},
               "scale config");
  ScaleConfig cfg;
  cfg.max_spherical_spread = j.value("max_spherical_spread", cfg.max_spherical_spread);
  cfg.max_depth_ratio = j.value("max_depth_ratio", cfg.max_depth_ratio);
  cfg.min_normal_dot = j.value("min_normal_dot", cfg.min_normal_dot);
  cfg.hist_min = j.value("hist_min", cfg.hist_min);
  cfg.hist_max = j.value("hist_max", cfg.hist_max);
  cfg.hist_bins = j.value("hist_bins", cfg.hist_bins);
  cfg.subsample_stride = j.value("subsample_stride", cfg.subsample_stride);
  return cfg;
}

Json scale_config_to_json(const ScaleConfig& cfg) {
  return {{"max_spherical_spread", cfg.max_spherical_spread},
          {"max_depth_ratio", cfg.max_depth_ratio},
          {"min_normal_dot", cfg.min_normal_dot},
          {"hist_min", cfg.hist_min},
          {"hist_max", cfg.hist_max},
          {"hist_bins", cfg.hist_bins},
          {"subsample_stride", cfg.subsample_stride}};
}

TrainConfig train_config_from_json(const Json& j) {
  require_keys(j,
               {"learning_rate", "iterations", "batch_size", "lambda_flow", "lambda_rad", "seed",
                "beta1", "beta2", "epsilon"},
               "train config");
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lambda_flow = j.value("lambda_flow", cfg.lambda_flow);
  cfg.lambda_rad = j.value("lambda_rad", cfg.lambda_rad);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.adam.beta1 = j.value("beta1", cfg.adam.beta1);
  cfg.adam.beta2 = j.value("beta2", cfg.adam.beta2);
  cfg.adam.epsilon = j.value("epsilon", cfg.adam.epsilon);
  return cfg;
}

Json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"iterations", cfg.iterations},
          {"batch_size", cfg.batch_size},
          {"lambda_flow", cfg.lambda_flow},
          {"lambda_rad", cfg.lambda_rad},
          {"seed", cfg.seed},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"epsilon", cfg.adam.epsilon}};
}

void write_field_json(const Path& path, const CouplingField& field) {
  Json j;
  j["type"] = "coupling";
  j["n_layers"] = field.n_layers;
  j["hidden"] = CouplingField::kHidden;
  j["freq_pairs"] = CouplingField::kFreqPairs;
  j["log_scale_bound"] = CouplingField::kLogScaleBound;
  j["center"] = vec3_to_json(field.center);
  j["radius"] = field.radius;
  j["time_origin"] = field.time_origin;
  j["time_span"] = field.time_span;
  Json params = Json::array();
  for (Eigen::Index i = 0; i < field.params.size(); ++i) params.push_back(field.params(i));
  j["params"] = std::move(params);
  save_json(path, j);
}

CouplingField read_field_json(const Path& path) {
  const Json j = load_json(path);
  const std::string where = path.string();
  require_keys(j,
               {"type", "n_layers", "hidden", "freq_pairs", "log_scale_bound", "center", "radius",
                "time_origin", "time_span", "params"},
               where);
  if (j.value("type", "") != "coupling") {
    throw Error(ErrorCode::ParseError, where + ": unsupported field type");
  }
  if (j.value("hidden", 0) != CouplingField::kHidden ||
      j.value("freq_pairs", 0) != CouplingField::kFreqPairs) {
    throw Error(ErrorCode::ParseError, where + ": architecture constants mismatch");
  }
  CouplingField field;
  field.n_layers = j.value("n_layers", 6);
  field.center = vec3_from_json(j.at("center"), where);
  field.radius = json_number(j, "radius", where);
  field.time_origin = json_number(j, "time_origin", where);
  field.time_span = json_number(j, "time_span", where);
  const Json& params = j.at("params");
  if (!params.is_array() || params.size() != std::size_t(field.param_count())) {
    throw Error(ErrorCode::ParseError, where + ": expected " +
                                           std::to_string(field.param_count()) + " parameters");
  }
  field.params.resize(field.param_count());
  for (Eigen::Index i = 0; i < field.params.size(); ++i) {
    field.params(i) = params[std::size_t(i)].get<double>();
  }
  return field;
}

namespace {

template <typename Fn>
void for_each_metric(const MetricsReport& r, Fn&& fn) {
  fn("ego_rmse", r.ego_rmse);
  fn("label_precision", r.label_precision);
  fn("label_recall", r.label_recall);
  fn("label_f1", r.label_f1);
  fn("mask_iou", r.mask_iou);
  fn("scale_rel_error", r.scale_rel_error);
  fn("flow_epe", r.flow_epe);
  fn("warp_epe", r.warp_epe);
  fn("rad_abs_mean", r.rad_abs_mean);
  fn("rad_abs_max", r.rad_abs_max);
}

}  // namespace

Json metrics_to_json(const MetricsReport& r) {
  Json j;
  for_each_metric(r, [&](const char* name, const std::optional<double>& v) {
    j[name] = v ? Json(*v) : Json(nullptr);
  });
  return j;
}

std::string metrics_to_csv(const MetricsReport& r) {
  std::string csv = "metric,value\n";
  for_each_metric(r, [&](const char* name, const std::optional<double>& v) {
    csv += name;
    csv += ",";
    if (v) csv += Json(*v).dump();
    csv += "\n";
  });
  return csv;
}

Json load_json(const Path& path) {
  auto is = open_in(path, std::ios::in);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void save_json(const Path& path, const Json& j) {
  auto os = open_out(path, std::ios::out);
  os << j.dump(2) << "\n";
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void save_text(const Path& path, const std::string& text) {
  auto os = open_out(path, std::ios::out);
  os << text;
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace radarflow::io
