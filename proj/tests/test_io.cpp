#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "radarflow/io.hpp"
#include "radarflow/rng.hpp"

using namespace radarflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("radarflow_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void corrupt_magic(const fs::path& p) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.write("XXXX", 4);
}

}  // namespace

TEST_CASE("depth image DPF1 round trip") {
  TempDir tmp;
  DepthImage depth = DepthImage::zeros(2, 2, ScaleState::Metric);
  depth.at(0, 0) = 1.25;   // exactly representable in f32
  depth.at(1, 0) = 0.0;
  depth.at(0, 1) = 1024.5;
  depth.at(1, 1) = 3.0;
  const fs::path p = tmp.path / "d.dpf";
  io::write_depth(p, depth);
  const DepthImage back = io::read_depth(p);
  CHECK(back.width == 2);
  CHECK(back.height == 2);
  CHECK(back.scale_state == ScaleState::Metric);
  CHECK(back.data == depth.data);

  // f32 precision: arbitrary doubles come back as their f32 rounding.
  DepthImage fine = DepthImage::zeros(1, 1, ScaleState::Relative);
  fine.at(0, 0) = 0.1;
  io::write_depth(tmp.path / "f.dpf", fine);
  CHECK(io::read_depth(tmp.path / "f.dpf").at(0, 0) == double(float(0.1)));
}

TEST_CASE("depth reader rejects bad magic and truncation") {
  TempDir tmp;
  DepthImage depth = DepthImage::zeros(4, 4, ScaleState::Relative);
  const fs::path p = tmp.path / "d.dpf";
  io::write_depth(p, depth);

  corrupt_magic(p);
  try {
    io::read_depth(p);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadMagic);
  }

  io::write_depth(p, depth);
  fs::resize_file(p, fs::file_size(p) - 8);
  try {
    io::read_depth(p);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
  }

  // Header promising more pixels than any sane file: dimension overflow.
  std::ofstream huge(tmp.path / "h.dpf", std::ios::binary);
  huge.write("DPF1", 4);
  const unsigned char big[8] = {0xff, 0xff, 0xff, 0x7f, 0xff, 0xff, 0xff, 0x7f};
  huge.write(reinterpret_cast<const char*>(big), 8);
  huge.close();
  try {
    io::read_depth(tmp.path / "h.dpf");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionOverflow);
  }
}

TEST_CASE("flow image FLW1 round trip and errors") {
  TempDir tmp;
  FlowImage flow = FlowImage::zeros(3, 2);
  flow.set(0, 0, 1.5, -2.5);
  flow.set(2, 1, -0.25, 4.0);
  const fs::path p = tmp.path / "f.flw";
  io::write_flow(p, flow);
  const FlowImage back = io::read_flow(p);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.data == flow.data);

  corrupt_magic(p);
  CHECK_THROWS_AS(io::read_flow(p), Error);
  io::write_flow(p, flow);
  fs::resize_file(p, fs::file_size(p) - 1);
  try {
    io::read_flow(p);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
  }
}

TEST_CASE("PGM mask round trip") {
  TempDir tmp;
  DynamicMask mask = DynamicMask::zeros(5, 3);
  mask.at(0, 0) = 1;
  mask.at(4, 2) = 1;
  mask.at(2, 1) = 1;
  const fs::path p = tmp.path / "m.pgm";
  io::write_mask_pgm(p, mask);
  const DynamicMask back = io::read_mask_pgm(p);
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.data == mask.data);
}

TEST_CASE("ASCII PLY export is parseable") {
  TempDir tmp;
  const std::vector<Vec3> pts = {{1.5, -2.25, 3.0}, {0.1, 0.2, 0.3}};
  const std::vector<double> vr = {-1.5, 2.0};
  const fs::path p = tmp.path / "cloud.ply";
  io::write_ply(p, pts, &vr);

  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  CHECK(line == "ply");
  std::getline(is, line);
  CHECK(line == "format ascii 1.0");
  std::getline(is, line);
  CHECK(line == "element vertex 2");
  int props = 0;
  while (std::getline(is, line) && line != "end_header") ++props;
  CHECK(props == 4);
  std::getline(is, line);
  std::istringstream row(line);
  double x, y, z, v;
  row >> x >> y >> z >> v;
  CHECK(x == 1.5);
  CHECK(y == -2.25);
  CHECK(z == 3.0);
  CHECK(v == -1.5);
}

TEST_CASE("radar JSONL round trip is canonical and validated") {
  TempDir tmp;
  RadarFrame f0;
  f0.timestamp = 0.0;
  f0.sensor_from_world = RigidTransform::identity();
  f0.points.push_back({Vec3(1.25, -2.5, 0.75), -3.125});
  f0.points.push_back({Vec3(10.1, 0.2, 1.3), 0.7});
  RadarFrame f1 = f0;
  f1.timestamp = 0.1;
  f1.sensor_from_world.translation = Vec3(0.8, 0, 0);

  const fs::path p = tmp.path / "radar.jsonl";
  io::write_radar_jsonl(p, {f0, f1});
  const auto frames = io::read_radar_jsonl(p);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].points.size() == 2);
  CHECK(frames[0].points[0].position == f0.points[0].position);
  CHECK(frames[0].points[0].radial_velocity == f0.points[0].radial_velocity);
  CHECK(frames[1].sensor_from_world.translation == f1.sensor_from_world.translation);

  // Byte-stable canonical serialization.
  const std::string line = io::radar_frame_to_json_line(frames[0]);
  io::write_radar_jsonl(p, frames);
  const auto again = io::read_radar_jsonl(p);
  CHECK(io::radar_frame_to_json_line(again[0]) == line);

  // NaN fields are rejected with the line number.
  std::ofstream bad(tmp.path / "bad.jsonl");
  bad << line << "\n";
  bad << R"({"points": [[1.0, 2.0, 3.0, null]], "sensor_from_world": )"
      << io::Json(io::Json::parse(line)["sensor_from_world"]).dump() << R"(, "t": 1.0})" << "\n";
  bad.close();
  try {
    io::read_radar_jsonl(tmp.path / "bad.jsonl");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  // Non-increasing timestamps are rejected.
  std::ofstream mono(tmp.path / "mono.jsonl");
  mono << io::radar_frame_to_json_line(f1) << "\n" << io::radar_frame_to_json_line(f0) << "\n";
  mono.close();
  try {
    io::read_radar_jsonl(tmp.path / "mono.jsonl");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonMonotonicTimestamps);
  }

  // Points at the sensor origin are rejected at parse time.
  std::ofstream origin(tmp.path / "origin.jsonl");
  io::Json j = io::Json::parse(line);
  j["points"] = io::Json::array({io::Json::array({0.01, 0.0, 0.0, 1.0})});
  origin << j.dump() << "\n";
  origin.close();
  CHECK_THROWS_AS(io::read_radar_jsonl(tmp.path / "origin.jsonl"), Error);
}

TEST_CASE("scene flow samples JSONL round trip") {
  TempDir tmp;
  SceneFlowSample s;
  s.x_ti = Vec3(1, 2, 3);
  s.x_tj = Vec3(1.5, 2.5, 3.5);
  s.t_i = 0.1;
  s.t_j = 0.2;
  s.radar_origin = Vec3(0.5, 0, 0);
  s.radial_velocity = -2.25;
  s.T_j_to_i.translation = Vec3(0.1, 0.2, 0.3);
  s.src_u = 12;
  s.src_v = 34;
  SceneFlowSample no_vr = s;
  no_vr.radial_velocity.reset();

  const fs::path p = tmp.path / "samples.jsonl";
  io::write_samples_jsonl(p, {s, no_vr});
  const auto back = io::read_samples_jsonl(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].x_ti == s.x_ti);
  CHECK(back[0].x_tj == s.x_tj);
  CHECK(back[0].radial_velocity.has_value());
  CHECK(*back[0].radial_velocity == -2.25);
  CHECK(back[0].T_j_to_i.translation == s.T_j_to_i.translation);
  CHECK(back[0].src_u == 12);
  CHECK(!back[1].radial_velocity.has_value());
}

TEST_CASE("camera and config JSON round trips with strict keys") {
  TempDir tmp;
  CameraModel cam;
  cam.fx = 400;
  cam.fy = 410;
  cam.cx = 160;
  cam.cy = 90;
  cam.width = 320;
  cam.height = 180;
  const fs::path p = tmp.path / "cam.json";
  io::write_camera_json(p, cam);
  const CameraModel back = io::read_camera_json(p);
  CHECK(back.fx == cam.fx);
  CHECK(back.width == cam.width);

  io::Json j = io::load_json(p);
  j["zoom"] = 2;
  io::save_json(p, j);
  try {
    io::read_camera_json(p);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("zoom") != std::string::npos);
  }

  const SceneConfig cfg = SceneConfig::default_test_scene();
  const SceneConfig cfg2 = io::scene_config_from_json(io::scene_config_to_json(cfg));
  CHECK(cfg2.duration == cfg.duration);
  CHECK(cfg2.dynamic_boxes.size() == cfg.dynamic_boxes.size());
  CHECK(cfg2.camera.fx == cfg.camera.fx);
  CHECK(cfg2.radar.points_per_frame == cfg.radar.points_per_frame);

  RansacConfig rc;
  rc.iterations = 123;
  const RansacConfig rc2 = io::ransac_config_from_json(io::ransac_config_to_json(rc));
  CHECK(rc2.iterations == 123);

  TrainConfig tc;
  tc.learning_rate = 0.005;
  tc.adam.beta2 = 0.99;
  const TrainConfig tc2 = io::train_config_from_json(io::train_config_to_json(tc));
  CHECK(tc2.learning_rate == 0.005);
  CHECK(tc2.adam.beta2 == 0.99);
}

TEST_CASE("coupling field JSON round trip preserves parameters bitwise") {
  TempDir tmp;
  CouplingField f = CouplingField::make(6, 99);
  SplitMix64 rng(5);
  for (Eigen::Index i = 0; i < f.params.size(); ++i) f.params(i) = rng.uniform(-1, 1);
  f.center = Vec3(3, -4, 5);
  f.radius = 17.5;
  f.time_origin = 2.0;
  f.time_span = 4.9;
  const fs::path p = tmp.path / "field.json";
  io::write_field_json(p, f);
  const CouplingField back = io::read_field_json(p);
  CHECK(back.n_layers == f.n_layers);
  CHECK(back.center == f.center);
  CHECK(back.radius == f.radius);
  CHECK(back.time_origin == f.time_origin);
  CHECK(back.time_span == f.time_span);
  CHECK((back.params - f.params).cwiseAbs().maxCoeff() == 0.0);

  // Warp through the reloaded field is bit-identical.
  const Vec3 x(4, -3, 6);
  CHECK(f.warp(x, 0.2, 0.8) == back.warp(x, 0.2, 0.8));
}

TEST_CASE("metrics serialization carries nulls for missing sections") {
  MetricsReport r;
  r.ego_rmse = 0.01;
  const io::Json j = io::metrics_to_json(r);
  CHECK(j["ego_rmse"].get<double>() == 0.01);
  CHECK(j["warp_epe"].is_null());
  const std::string csv = io::metrics_to_csv(r);
  CHECK(csv.find("metric,value") == 0);
  CHECK(csv.find("ego_rmse,0.01") != std::string::npos);
}
