#include "geowarp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace geowarp {
namespace {

Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

// Columns: camera x -> world +x, camera y -> world -z, camera z -> world +y.
Eigen::Matrix3d camera_basis() {
  Eigen::Matrix3d b;
  b << 1, 0, 0, 0, 0, 1, 0, -1, 0;
  return b;
}

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) <= kPixelSnap ? r : x;
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::resized(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  // Pixel centres sit at integer coordinates, so the principal point scales
  // about -0.5.
  CameraIntrinsics out;
  out.fx = fx * sx;
  out.fy = fy * sy;
  out.cx = (cx + 0.5) * sx - 0.5;
  out.cy = (cy + 0.5) * sy - 0.5;
  out.width = new_width;
  out.height = new_height;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  RigidTransform out;
  out.rotation = m.topLeftCorner<3, 3>();
  out.translation = m.topRightCorner<3, 1>();
  return out;
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform EgoMotion::to_transform() const {
  RigidTransform out;
  out.rotation = rot_y(r_y) * rot_x(r_x) * rot_z(r_z);
  out.translation = Eigen::Vector3d(t_x, t_y, t_z);
  return out;
}

EgoMotion EgoMotion::from_transform(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  // R = Ry(a) Rx(b) Rz(c):  R(1,2) = -sin b,  R(0,2) = sin a cos b,
  // R(2,2) = cos a cos b,  R(1,0) = cos b sin c,  R(1,1) = cos b cos c.
  const double sb = std::clamp(-r(1, 2), -1.0, 1.0);
  const double b = std::asin(sb);
  if (std::abs(b) > std::numbers::pi / 2 - 1e-6) {
    throw std::domain_error("ego motion: rotation too close to the pitch singularity");
  }
  EgoMotion m;
  m.r_x = b;
  m.r_y = std::atan2(r(0, 2), r(2, 2));
  m.r_z = std::atan2(r(1, 0), r(1, 1));
  m.t_x = t.translation.x();
  m.t_y = t.translation.y();
  m.t_z = t.translation.z();
  return m;
}

EgoMotion EgoMotion::inverse() const { return from_transform(to_transform().inverse()); }

bool EgoMotion::is_zero() const {
  return t_x == 0.0 && t_y == 0.0 && t_z == 0.0 && r_x == 0.0 && r_y == 0.0 && r_z == 0.0;
}

DepthMap::DepthMap(int w, int h)
    : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0), mask(values.size(), 0) {}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

RigidTransform pose_to_transform(const Pose& pose) {
  const double v[] = {pose.position.x(), pose.position.y(), pose.position.z(),
                      pose.yaw, pose.pitch, pose.roll};
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("pose: non-finite component");
  }
  RigidTransform t;
  t.rotation = rot_z(pose.yaw) * rot_x(pose.pitch) * rot_y(pose.roll) * camera_basis();
  t.translation = pose.position;
  return t;
}

EgoMotion ego_motion(const Pose& prev, const Pose& curr) {
  const RigidTransform rel = pose_to_transform(curr).inverse() * pose_to_transform(prev);
  if (prev.position == curr.position && prev.yaw == curr.yaw && prev.pitch == curr.pitch && prev.roll == curr.roll) {
    return {};
  }
  return EgoMotion::from_transform(rel);
}

PointCloud unproject(const DepthMap& depth, const CameraIntrinsics& k) {
  if (depth.width != k.width || depth.height != k.height) {
    throw std::invalid_argument("unproject: depth map is " + std::to_string(depth.width) + "x" +
                                std::to_string(depth.height) + " but intrinsics are " +
                                std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  PointCloud cloud;
  cloud.reserve(depth.valid_count());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.valid(x, y)) continue;
      const double d = depth.at(x, y);
      CloudPoint p;
      p.position = Eigen::Vector3d((x - k.cx) * d / k.fx, (y - k.cy) * d / k.fy, d);
      p.source_index = y * depth.width + x;
      cloud.push_back(p);
    }
  }
  return cloud;
}

std::vector<ProjectedPoint> project(std::span<const CloudPoint> cloud, const CameraIntrinsics& k,
                                    double z_min, ProjectionStats* stats) {
  std::vector<ProjectedPoint> out;
  out.reserve(cloud.size());
  ProjectionStats local;
  for (const auto& p : cloud) {
    const double z = p.position.z();
    if (!(z > z_min)) {
      ++local.culled_near;
      continue;
    }
    const double u = snap(k.fx * p.position.x() / z + k.cx);
    const double v = snap(k.fy * p.position.y() / z + k.cy);
    // Footprint spans [floor(u), ceil(u)]; keep if any pixel of it is inside.
    if (!(std::ceil(u) >= 0.0 && std::floor(u) <= k.width - 1 && std::ceil(v) >= 0.0 &&
          std::floor(v) <= k.height - 1)) {
      ++local.culled_outside;
      continue;
    }
    ProjectedPoint q;
    q.u = u;
    q.v = v;
    q.depth = z;
    q.rgb[0] = p.rgb[0];
    q.rgb[1] = p.rgb[1];
    q.rgb[2] = p.rgb[2];
    q.source_index = p.source_index;
    out.push_back(q);
  }
  if (stats) *stats = local;
  return out;
}

PointCloud apply_transform(std::span<const CloudPoint> cloud, const RigidTransform& t) {
  PointCloud out(cloud.begin(), cloud.end());
  for (auto& p : out) p.position = t.apply(p.position);
  return out;
}

double orthonormality_error(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace geowarp
