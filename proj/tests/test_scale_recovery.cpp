#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "radarflow/rng.hpp"
#include "radarflow/scale_recovery.hpp"
#include "radarflow/simulator.hpp"

using namespace radarflow;

TEST_CASE("sphere_directions normalizes and rejects zero norms") {
  const auto dirs = sphere_directions({Vec3(0, 0, 2), Vec3(3, 4, 0)});
  CHECK((dirs[0] - Vec3(0, 0, 1)).norm() <= 1e-12);
  CHECK((dirs[1] - Vec3(0.6, 0.8, 0)).norm() <= 1e-12);

  SplitMix64 rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) {
    pts.emplace_back(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(1, 9));
  }
  for (const Vec3& d : sphere_directions(pts)) CHECK(std::abs(d.norm() - 1.0) <= 1e-12);

  CHECK_THROWS_AS(sphere_directions({Vec3(1e-9, 0, 0)}), Error);
}

TEST_CASE("nearest3_on_sphere matches brute force on 10k directions") {
  SplitMix64 rng(17);
  std::vector<Vec3> dirs;
  for (int i = 0; i < 10000; ++i) {
    dirs.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
  }
  const KdTree3 tree{std::vector<Vec3>(dirs)};

  for (int q = 0; q < 200; ++q) {
    const Vec3 query = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const auto got = nearest3_on_sphere(tree, query);

    // Brute force with the identical (dist2, index) comparator.
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < dirs.size(); ++i) {
      all.emplace_back((dirs[i] - query).squaredNorm(), i);
    }
    std::sort(all.begin(), all.end());
    CHECK(got[0] == all[0].second);
    CHECK(got[1] == all[1].second);
    CHECK(got[2] == all[2].second);
  }
}

TEST_CASE("nearest3_on_sphere trivial cases") {
  const std::vector<Vec3> dirs = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  const KdTree3 tree{std::vector<Vec3>(dirs)};
  const auto nn = nearest3_on_sphere(tree, Vec3(0, 1, 0));
  CHECK(nn[0] == 1);  // exact match first
  CHECK(((nn[1] == 0 && nn[2] == 2) || (nn[1] == 2 && nn[2] == 0)));

  const KdTree3 small{std::vector<Vec3>{Vec3(1, 0, 0), Vec3(0, 1, 0)}};
  CHECK_THROWS_AS(nearest3_on_sphere(small, Vec3(1, 0, 0)), Error);
}

TEST_CASE("plane_scale recovers the exact scale for coplanar construction") {
  // Metric plane z = 4 in camera coordinates; visual points are metric / 2.
  const Vec3 pa_m(0.5, 0.2, 4.0), pb_m(-0.8, 0.4, 4.0), pc_m(0.3, -0.9, 4.0);
  const Vec3 radar(0.1, 0.1, 4.0);  // on the metric plane
  const double s = plane_scale(radar, pa_m / 2, pb_m / 2, pc_m / 2, ScaleConfig{});
  CHECK(s == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("plane_scale error paths") {
  ScaleConfig cfg;
  // Collinear neighbors.
  CHECK_THROWS_AS(
      plane_scale(Vec3(0, 0, 5), Vec3(0, 0, 1), Vec3(0, 0, 2), Vec3(0, 0, 3), cfg), Error);
  try {
    plane_scale(Vec3(0, 0, 5), Vec3(1, 1, 1), Vec3(2, 2, 2), Vec3(3, 3, 3), cfg);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegeneratePlane);
  }
  // Plane through the camera origin: normal orthogonal to the anchor.
  try {
    plane_scale(Vec3(0, 0, 5), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnstableDenominator);
  }
  // Radar point behind the plane (negative scale).
  try {
    plane_scale(Vec3(0, 0, -5), Vec3(0.5, 0, 1), Vec3(0, 0.5, 1), Vec3(-0.5, -0.5, 1), cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveScale);
  }
}

TEST_CASE("plane_scale equivariance: scaling the visual points divides the scale") {
  SplitMix64 rng(23);
  ScaleConfig cfg;
  cfg.min_normal_dot = 0.0;  // exercise the raw formula
  int checked = 0;
  while (checked < 100) {
    const Vec3 a(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2, 6));
    const Vec3 b(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2, 6));
    const Vec3 c(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2, 6));
    const Vec3 r(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(2, 6));
    const double k = rng.uniform(0.3, 3.0);
    double s0, sk;
    try {
      s0 = plane_scale(r, a, b, c, cfg);
      sk = plane_scale(r, k * a, k * b, k * c, cfg);
    } catch (const Error&) {
      continue;
    }
    CHECK(std::abs(sk - s0 / k) <= 1e-9 * std::max(1.0, std::abs(s0 / k)));
    ++checked;
  }
}

TEST_CASE("plane_scale is anchor-invariant for exact coplanar input") {
  const Vec3 n = Vec3(0.2, -0.3, 1.0).normalized();
  const double d = 3.0;
  auto on_plane = [&](double x, double y) {
    const double z = (d - n.x() * x - n.y() * y) / n.z();
    return Vec3(x, y, z);
  };
  const Vec3 a = on_plane(0.4, 0.1), b = on_plane(-0.5, 0.3), c = on_plane(0.2, -0.6);
  const Vec3 radar = 1.7 * on_plane(0.0, 0.05);  // metric point on the scaled plane
  ScaleConfig cfg;
  const double s1 = plane_scale(radar, a, b, c, cfg);
  const double s2 = plane_scale(radar, b, c, a, cfg);
  const double s3 = plane_scale(radar, c, a, b, cfg);
  CHECK(std::abs(s1 - 1.7) <= 1e-9);
  CHECK(std::abs(s1 - s2) <= 1e-9);
  CHECK(std::abs(s1 - s3) <= 1e-9);
}

TEST_CASE("vote_scale basics and robustness") {
  ScaleConfig cfg;
  std::vector<ScaleSample> same;
  for (int i = 0; i < 10; ++i) same.push_back({0, 1.7, {0, 1, 2}});
  CHECK(vote_scale(same, cfg) == doctest::Approx(1.7));

  // 80% tightly around 2.0, 20% uniform junk.
  SplitMix64 rng(31);
  std::vector<ScaleSample> mixed;
  for (int i = 0; i < 2000; ++i) {
    const double s =
        (i % 5 != 0) ? rng.normal(2.0, 0.01) : rng.uniform(0.1, 10.0);
    if (s > 0) mixed.push_back({std::uint32_t(i), s, {0, 1, 2}});
  }
  CHECK(std::abs(vote_scale(mixed, cfg) - 2.0) <= 0.02);

  // Permutation invariance.
  std::vector<ScaleSample> shuffled = mixed;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(vote_scale(shuffled, cfg) == vote_scale(mixed, cfg));

  std::vector<ScaleSample> outside;
  outside.push_back({0, 100.0, {0, 1, 2}});
  try {
    vote_scale(outside, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoValidSamples);
  }
}

TEST_CASE("vote_scale breaks bin-count ties toward the lower bin") {
  ScaleConfig cfg;
  cfg.hist_min = 0.0;
  cfg.hist_max = 10.0;
  cfg.hist_bins = 10;  // bin width 1
  // One sample in bin 2, one in bin 7: tie, lower bin wins; its +-1 bin
  // window contains only the 2.5 sample.
  std::vector<ScaleSample> samples = {{0, 7.5, {0, 1, 2}}, {1, 2.5, {0, 1, 2}}};
  CHECK(vote_scale(samples, cfg) == doctest::Approx(2.5));
}

TEST_CASE("apply_scale multiplies valid pixels only") {
  DepthImage depth = DepthImage::zeros(2, 2, ScaleState::Relative);
  depth.at(0, 0) = 1.5;
  depth.at(1, 1) = 4.0;
  const DepthImage metric = apply_scale(depth, 2.0);
  CHECK(metric.scale_state == ScaleState::Metric);
  CHECK(metric.at(0, 0) == doctest::Approx(3.0));
  CHECK(metric.at(1, 0) == 0.0);
  CHECK(metric.at(0, 1) == 0.0);
  CHECK(metric.at(1, 1) == doctest::Approx(8.0));

  const DepthImage same = apply_scale(depth, 1.0);
  CHECK(same.at(0, 0) == depth.at(0, 0));

  CHECK_THROWS_AS(apply_scale(depth, 0.0), Error);
  CHECK_THROWS_AS(apply_scale(metric, 2.0), Error);  // already metric
}

TEST_CASE("collect_scale_samples on a synthetic plane recovers the exact scale") {
  // Camera looking at a fronto-parallel plane z = 12 m (metric). Relative
  // depth is metric / 3.
  CameraModel cam;
  cam.fx = cam.fy = 200.0;
  cam.cx = 80.0;
  cam.cy = 60.0;
  cam.width = 160;
  cam.height = 120;
  cam.cam_from_ego = RigidTransform::identity();  // ego frame == camera frame here

  const double s_gt = 3.0;
  DepthImage rel = DepthImage::zeros(cam.width, cam.height, ScaleState::Relative);
  for (std::uint32_t v = 0; v < cam.height; ++v) {
    for (std::uint32_t u = 0; u < cam.width; ++u) rel.at(u, v) = 12.0 / s_gt;
  }

  RadarFrame frame;
  SplitMix64 rng(3);
  for (int i = 0; i < 60; ++i) {
    const double u = rng.uniform(20.0, 139.0);
    const double v = rng.uniform(20.0, 99.0);
    frame.points.push_back({back_project(cam, u, v, 12.0), 0.0});
  }
  const std::vector<bool> labels(frame.points.size(), false);

  ScaleConfig cfg;
  cfg.max_spherical_spread = 0.08;  // wider than the stride-4 pixel pitch here
  const auto samples = collect_scale_samples(rel, cam, frame, labels, cfg);
  CHECK(samples.size() > 30);
  for (const ScaleSample& s : samples) CHECK(std::abs(s.scale - s_gt) <= 1e-6);
  CHECK(std::abs(vote_scale(samples, cfg) - s_gt) <= 1e-9);
}

TEST_CASE("simulator scene without occlusions yields exact per-sample scales") {
  // Ground plane only: no occlusion boundaries, so no cross-surface
  // associations can slip past the locality constraints and every accepted
  // sample must be exact. (Scenes with boxes leave a thin silhouette band of
  // wrong-plane samples that only the histogram vote rejects.)
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.static_boxes.clear();
  cfg.dynamic_boxes.clear();
  cfg.duration = 0.5;
  cfg.radar.sigma_p = 0.0;
  cfg.radar.sigma_v = 0.0;
  cfg.relative_depth_scale = 3.0;
  const auto bundles = simulate(cfg);
  const ScaleConfig sc;
  std::size_t total = 0;
  for (const FrameBundle& fb : bundles) {
    const auto samples =
        collect_scale_samples(fb.depth_relative, cfg.camera, fb.radar, fb.dyn_labels_gt, sc);
    for (const ScaleSample& s : samples) CHECK(std::abs(s.scale - 3.0) <= 1e-6);
    total += samples.size();
    CHECK(std::abs(vote_scale(samples, sc) - 3.0) <= 3e-3);
  }
  CHECK(total > 100);
}

TEST_CASE("end-to-end: scaled depth agrees with static radar ranges at their projections") {
  SceneConfig cfg = SceneConfig::default_test_scene();
  cfg.radar.sigma_p = 0.0;
  cfg.radar.sigma_v = 0.0;
  cfg.relative_depth_scale = 3.0;
  const auto bundles = simulate(cfg);
  const ScaleConfig sc;

  std::size_t checked = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    const FrameBundle& fb = bundles[k];
    const auto samples =
        collect_scale_samples(fb.depth_relative, cfg.camera, fb.radar, fb.dyn_labels_gt, sc);
    const double s = vote_scale(samples, sc);
    const DepthImage metric = apply_scale(fb.depth_relative, s);

    for (std::size_t i = 0; i < fb.radar.points.size(); ++i) {
      if (fb.dyn_labels_gt[i]) continue;
      const Vec3 p_cam = cfg.camera.cam_from_ego * fb.radar.points[i].position;
      if (p_cam.z() <= 1e-6) continue;
      const Vec2 uv = project(cfg.camera, p_cam);
      if (!cfg.camera.contains(uv.x(), uv.y())) continue;
      const auto d = sample_depth_bilinear(metric, uv.x(), uv.y());
      if (!d) continue;
      // Skip projections straddling a depth discontinuity: there the map
      // genuinely represents a different surface than the radar return.
      const std::uint32_t u0 = std::min(std::uint32_t(uv.x()), metric.width - 2);
      const std::uint32_t v0 = std::min(std::uint32_t(uv.y()), metric.height - 2);
      const double taps[4] = {metric.at(u0, v0), metric.at(u0 + 1, v0), metric.at(u0, v0 + 1),
                              metric.at(u0 + 1, v0 + 1)};
      const double tap_min = std::min({taps[0], taps[1], taps[2], taps[3]});
      const double tap_max = std::max({taps[0], taps[1], taps[2], taps[3]});
      if (tap_max / tap_min > sc.max_depth_ratio) continue;

      const Vec3 from_depth = back_project(cfg.camera, uv.x(), uv.y(), *d);
      const double range_err = std::abs(from_depth.norm() - p_cam.norm()) / p_cam.norm();
      CHECK(range_err <= 0.03);
      ++checked;
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("collect_scale_samples rejects depth discontinuities and all-dynamic input") {
  CameraModel cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = 40.0;
  cam.cy = 30.0;
  cam.width = 80;
  cam.height = 60;
  cam.cam_from_ego = RigidTransform::identity();

  // Left half near, right half far: neighbors straddling the edge violate the
  // depth-ratio constraint.
  DepthImage rel = DepthImage::zeros(cam.width, cam.height, ScaleState::Relative);
  for (std::uint32_t v = 0; v < cam.height; ++v) {
    for (std::uint32_t u = 0; u < cam.width; ++u) rel.at(u, v) = u < 40 ? 2.0 : 10.0;
  }

  RadarFrame frame;
  // A radar point whose three nearest stride-8 neighbors straddle the edge:
  // (40,32) and (40,24) on the far side, (32,32) on the near side.
  frame.points.push_back({back_project(cam, 37.0, 31.0, 6.0), 0.0});
  ScaleConfig cfg;
  cfg.max_spherical_spread = 0.3;
  cfg.subsample_stride = 8;
  const auto samples =
      collect_scale_samples(rel, cam, frame, std::vector<bool>{false}, cfg);
  CHECK(samples.empty());

  try {
    collect_scale_samples(rel, cam, frame, std::vector<bool>{true}, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoStaticPoints);
  }
}
