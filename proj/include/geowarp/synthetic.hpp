#pragma once

// Ray-cast scenes made of a ground plane and textured axis-aligned boxes.
// Rendering returns both the RGB image and the exact dense depth, so a
// synthetic dataset doubles as ground truth for the warp.

#include "geowarp/depth_data.hpp"
#include "geowarp/geometry.hpp"
#include "geowarp/image.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace geowarp {

struct SceneBox {
  Eigen::Vector3d min_corner = Eigen::Vector3d::Zero();
  Eigen::Vector3d max_corner = Eigen::Vector3d::Ones();
  std::uint32_t texture_seed = 0;
};

struct SyntheticSceneSpec {
  std::optional<double> ground_height = 0.0;  // world z of the ground plane
  std::uint32_t ground_seed = 0;
  std::vector<SceneBox> boxes;
  // Either one pose per frame or a single pose reused for every frame.
  std::vector<Pose> trajectory;
  CameraIntrinsics intrinsics;
  int frame_count = 1;

  // Throws std::invalid_argument for degenerate specs (no frames, a camera
  // inside a box or below the ground, inverted boxes, bad intrinsics).
  void validate() const;
  const Pose& pose_at(int frame) const;
};

struct RenderedView {
  Image rgb;
  DepthMap depth;  // z in the camera frame; sky pixels are masked out
};

RenderedView render_view(const SyntheticSceneSpec& scene, const Pose& pose);

// One Frame per spec frame, carrying dense true depth.
std::vector<Frame> render_synthetic_sequence(const SyntheticSceneSpec& scene);

// Street-like random scenes: a flat road with boxes on both sides and a
// camera driving forward with a slow yaw drift.
struct StreetSceneOptions {
  CameraIntrinsics intrinsics;
  int frames = 10;
  int min_boxes = 2;
  int max_boxes = 5;
  double camera_height = 1.6;
  double speed_min = 0.5;  // metres per frame
  double speed_max = 1.2;
  double yaw_rate_max = 0.01;  // radians per frame
};

SyntheticSceneSpec random_street_scene(const StreetSceneOptions& options, std::uint64_t seed);

// 288x88 camera used throughout the project, and its 72x24 desk-scale twin.
CameraIntrinsics default_intrinsics();
CameraIntrinsics desk_intrinsics();

}  // namespace geowarp
