#include "geowarp/depth_data.hpp"
#include "geowarp/synthetic.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace geowarp;
using testing::pose_at;

namespace {

LidarScan scan_of(std::vector<Eigen::Vector3d> points) { return {std::move(points), RigidTransform::identity()}; }

std::vector<Frame> numbered_frames(int n) {
  std::vector<Frame> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].pose.position.x() = i;
  return out;
}

}  // namespace

TEST_CASE("normalize_depth endpoints and midpoint") {
  const DepthLabelConfig cfg;
  CHECK(normalize_depth(3.0, cfg) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(normalize_depth(80.0, cfg) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(normalize_depth(3.0 / 0.51875, cfg) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(normalize_depth(2.9, cfg), std::out_of_range);
  CHECK_THROWS_AS(normalize_depth(80.5, cfg), std::out_of_range);
  CHECK(normalize_depth(4.0, cfg) > normalize_depth(4.1, cfg));
}

TEST_CASE("denormalize_label inverts normalization") {
  const DepthLabelConfig cfg;
  CHECK(denormalize_label(0.75, cfg) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(denormalize_label(0.25, cfg) == doctest::Approx(80.0).epsilon(1e-14));
  CHECK(denormalize_label(0.9, cfg) == denormalize_label(0.75, cfg));
  CHECK(denormalize_label(0.0, cfg) == denormalize_label(0.25, cfg));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(3.0, 80.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = d(rng);
    worst = std::max(worst, std::abs(denormalize_label(normalize_depth(x, cfg), cfg) - x));
  }
  CHECK(worst <= 1e-9);

  DepthLabelConfig log_cfg;
  log_cfg.transform = LabelTransform::kLog;
  CHECK(normalize_depth(3.0, log_cfg) == doctest::Approx(0.75));
  CHECK(normalize_depth(80.0, log_cfg) == doctest::Approx(0.25));
  CHECK(denormalize_label(normalize_depth(17.0, log_cfg), log_cfg) == doctest::Approx(17.0).epsilon(1e-12));
}

TEST_CASE("label config validation") {
  DepthLabelConfig bad;
  bad.d_min = 10;
  bad.d_max = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  DepthLabelConfig bad_labels;
  bad_labels.label_hi = 0.2;
  CHECK_THROWS_AS(bad_labels.validate(), std::invalid_argument);
}

TEST_CASE("scan_to_depth_map examples") {
  const CameraIntrinsics k = default_intrinsics();
  const ScanProjection near = scan_to_depth_map(scan_of({{0, 0, 2.5}}), k);
  CHECK(near.depth.valid_count() == 0);
  CHECK(near.culled == 1);

  const ScanProjection one = scan_to_depth_map(scan_of({{0, 0, 50}}), k);
  CHECK(one.depth.valid_count() == 1);
  const int px = static_cast<int>(std::lround(k.cx)), py = static_cast<int>(std::lround(k.cy));
  CHECK(one.depth.valid(px, py));
  CHECK(one.depth.at(px, py) == 50.0);

  // Both rays pass through the same pixel; the nearer one wins in any order.
  const Eigen::Vector3d dir(0.2, -0.1, 1.0);
  for (bool swap : {false, true}) {
    std::vector<Eigen::Vector3d> pts{10.0 * dir, 40.0 * dir};
    if (swap) std::swap(pts[0], pts[1]);
    const ScanProjection two = scan_to_depth_map(scan_of(pts), k);
    CHECK(two.depth.valid_count() == 1);
    for (std::size_t i = 0; i < two.depth.size(); ++i)
      if (two.depth.mask[i]) CHECK(two.depth.values[i] == doctest::Approx(10.0));
  }

  // Calibration moves sensor points into the camera frame first.
  LidarScan shifted = scan_of({{0, 0, 47}});
  shifted.sensor_to_camera.translation = {0, 0, 3};
  const ScanProjection moved = scan_to_depth_map(shifted, k);
  CHECK(moved.depth.at(px, py) == doctest::Approx(50.0));

  // Every kept label respects the configured range.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-40, 40), z(-5, 120);
  std::vector<Eigen::Vector3d> cloud;
  for (int i = 0; i < 5000; ++i) cloud.emplace_back(u(rng), u(rng) / 4, z(rng));
  const ScanProjection many = scan_to_depth_map(scan_of(cloud), k);
  CHECK(many.depth.valid_count() > 0);
  for (std::size_t i = 0; i < many.depth.size(); ++i) {
    if (!many.depth.mask[i]) continue;
    CHECK(many.depth.values[i] >= 3.0);
    CHECK(many.depth.values[i] <= 80.0);
  }
}

TEST_CASE("make_labels masks out-of-range depth") {
  DepthMap d(3, 1);
  d.values = {2.0, 3.0, 80.0};
  d.mask = {1, 1, 1};
  const LabelMap l = make_labels(d, {});
  CHECK(l.mask == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(l.labels[0] == 0.0f);
  CHECK(l.labels[1] == doctest::Approx(0.75));
  CHECK(l.labels[2] == doctest::Approx(0.25));
}

TEST_CASE("split_sequences") {
  const auto v100 = split_sequences(numbered_frames(100), 10);
  CHECK(v100.size() == 10);
  CHECK(split_sequences(numbered_frames(9), 10).empty());
  const auto v25 = split_sequences(numbered_frames(25), 10);
  REQUIRE(v25.size() == 2);
  CHECK(v25[0].frames.front().pose.position.x() == 0);
  CHECK(v25[0].frames.back().pose.position.x() == 9);
  CHECK(v25[1].frames.front().pose.position.x() == 10);
  CHECK(v25[1].frames.back().pose.position.x() == 19);
  const auto overlap = split_sequences(numbered_frames(12), 10, 1);
  CHECK(overlap.size() == 3);
  CHECK_THROWS_AS(split_sequences(numbered_frames(5), 1), std::invalid_argument);
}

TEST_CASE("synthetic rendering") {
  const CameraIntrinsics k = desk_intrinsics();

  SUBCASE("static scene gives identical frames") {
    SyntheticSceneSpec s = testing::two_box_scene(3, k, 1);
    s.frame_count = 3;
    const auto frames = render_synthetic_sequence(s);
    REQUIRE(frames.size() == 3);
    CHECK(frames[0].rgb == frames[1].rgb);
    CHECK(frames[1].rgb == frames[2].rgb);
    CHECK(frames[0].depth.values == frames[2].depth.values);
  }

  SUBCASE("fronto-parallel plane has uniform depth") {
    const auto frames = render_synthetic_sequence(testing::plane_scene(12.0, k, {0.0, 1.0, 2.0}));
    for (int i = 0; i < 3; ++i) {
      const DepthMap& d = frames[static_cast<std::size_t>(i)].depth;
      CHECK(d.valid_count() == d.size());
      double worst = 0.0;
      for (double v : d.values) worst = std::max(worst, std::abs(v - (12.0 - i)));
      CHECK(worst < 1e-9);
    }
  }

  SUBCASE("sky is masked and rendering is deterministic") {
    const SyntheticSceneSpec s = testing::two_box_scene(9, default_intrinsics(), 2);
    const auto a = render_synthetic_sequence(s);
    const auto b = render_synthetic_sequence(s);
    CHECK(a[1].rgb == b[1].rgb);
    CHECK(a[1].depth.mask == b[1].depth.mask);
    CHECK(a[0].depth.valid_count() < a[0].depth.size());
    CHECK(a[0].depth.valid_count() > a[0].depth.size() / 3);
  }

  SUBCASE("degenerate specs are rejected") {
    SyntheticSceneSpec s = testing::plane_scene(5.0, k);
    s.frame_count = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    SyntheticSceneSpec inside = testing::plane_scene(5.0, k);
    inside.trajectory[0] = pose_at(0, 5.5, 0);
    CHECK_THROWS_AS(render_synthetic_sequence(inside), std::invalid_argument);
    SyntheticSceneSpec inverted = testing::plane_scene(5.0, k);
    std::swap(inverted.boxes[0].min_corner, inverted.boxes[0].max_corner);
    CHECK_THROWS_AS(inverted.validate(), std::invalid_argument);
  }

  SUBCASE("random street scenes are valid and seeded") {
    StreetSceneOptions o;
    o.intrinsics = k;
    const auto a = random_street_scene(o, 42), b = random_street_scene(o, 42), c = random_street_scene(o, 43);
    CHECK_NOTHROW(a.validate());
    CHECK(a.boxes.size() == b.boxes.size());
    CHECK(a.boxes[0].min_corner == b.boxes[0].min_corner);
    CHECK(a.boxes[0].min_corner != c.boxes[0].min_corner);
    CHECK(a.trajectory.size() == 10);
  }
}
