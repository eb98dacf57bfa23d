#pragma once

// Camera model and rigid-body geometry.
//
// Axis conventions (used everywhere in the project):
//   camera frame: x right, y down, z forward (optical axis).
//   world frame:  right-handed, x east, y north, z up.
// A camera with zero yaw/pitch/roll looks along world +y with its x axis on
// world +x and its y axis on world -z. Orientation is applied as intrinsic
// yaw (about world up), then pitch (about the camera's right axis, nose up
// positive), then roll (about the forward axis):
//   R_world_from_camera = Rz(yaw) * Rx(pitch) * Ry(roll) * B
// where B is the fixed camera-to-world basis change described above.
//
// EgoMotion is the point transform from the earlier camera frame into the
// later one: p_curr = R * p_prev + t, with R = Ry(r_y) * Rx(r_x) * Rz(r_z)
// expressed in camera axes. Moving the camera 1 m forward therefore gives
// t = (0, 0, -1); turning it left by theta gives r_y = +theta.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <span>
#include <vector>

namespace geowarp {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws std::invalid_argument unless fx, fy > 0 and the principal point
  // lies inside the image.
  void validate() const;

  // Intrinsics for the same camera resampled to a new image size.
  CameraIntrinsics resized(int new_width, int new_height) const;
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  Eigen::Matrix4d matrix() const;
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);

  // Composition: (a * b).apply(p) == a.apply(b.apply(p)).
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);
};

struct EgoMotion {
  double t_x = 0.0;
  double t_y = 0.0;
  double t_z = 0.0;
  double r_x = 0.0;
  double r_y = 0.0;
  double r_z = 0.0;

  RigidTransform to_transform() const;
  // Throws std::domain_error when the rotation is within 1e-6 rad of the
  // r_x = +-pi/2 singularity.
  static EgoMotion from_transform(const RigidTransform& t);
  EgoMotion inverse() const;
  bool is_zero() const;
};

struct CloudPoint {
  Eigen::Vector3d position;
  std::uint8_t rgb[3] = {0, 0, 0};
  std::int32_t source_index = 0;
};

using PointCloud = std::vector<CloudPoint>;

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // metres, row-major
  std::vector<std::uint8_t> mask;  // 1 = valid

  DepthMap() = default;
  DepthMap(int w, int h);

  std::size_t size() const { return values.size(); }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t valid_count() const;
};

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  std::uint8_t rgb[3] = {0, 0, 0};
  std::int32_t source_index = 0;
};

struct ProjectionStats {
  std::size_t culled_near = 0;
  std::size_t culled_outside = 0;
};

// Points closer than this to the camera plane are never projected.
inline constexpr double kDefaultZMin = 1e-3;

// Projected coordinates within this distance of an integer are snapped to it,
// so that unproject followed by project lands exactly on pixel centres.
inline constexpr double kPixelSnap = 1e-7;

RigidTransform pose_to_transform(const Pose& pose);
EgoMotion ego_motion(const Pose& prev, const Pose& curr);

// One point per valid pixel; RGB is left zeroed for the caller to fill.
PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& k);

// Culls z <= z_min and any point whose footprint {floor,ceil}(u) x
// {floor,ceil}(v) has no pixel inside the image.
std::vector<ProjectedPoint> project(std::span<const CloudPoint> cloud, const CameraIntrinsics& k,
                                    double z_min = kDefaultZMin, ProjectionStats* stats = nullptr);

PointCloud apply_transform(std::span<const CloudPoint> cloud, const RigidTransform& t);

// Max absolute entry of R^T R - I.
double orthonormality_error(const Eigen::Matrix3d& r);

}  // namespace geowarp
