#include "geowarp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace geowarp {
namespace {

std::uint32_t hash3(std::int64_t x, std::int64_t y, std::uint32_t seed) {
  std::uint64_t h = static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull;
  h ^= static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4Full + seed;
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDull;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ull;
  h ^= h >> 33;
  return static_cast<std::uint32_t>(h);
}

// Lattice value in [-1, 1].
double lattice(std::int64_t x, std::int64_t y, std::uint32_t seed) {
  return hash3(x, y, seed) / 2147483647.5 - 1.0;
}

double value_noise(double x, double y, std::uint32_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3 - 2 * tx);
  ty = ty * ty * (3 - 2 * ty);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

// Fractal noise whose octaves fade out once the pixel footprint approaches
// the octave's cell size, which keeps distant surfaces from aliasing.
double filtered_noise(double x, double y, double footprint, double cell, std::uint32_t seed) {
  double sum = 0.0, amp = 1.0, norm = 0.0;
  for (int octave = 0; octave < 4; ++octave) {
    const double ratio = footprint / cell;
    const double w = std::clamp((1.0 - ratio) / 0.75, 0.0, 1.0);
    sum += amp * w * value_noise(x / cell, y / cell, seed + 101u * octave);
    norm += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  return sum / norm;
}

struct Material {
  double base[3];
  double contrast;
  double cell;
};

Material ground_material() { return {{118, 112, 104}, 0.35, 1.5}; }

Material box_material(std::uint32_t seed) {
  const double hue = (hash3(seed, 7, 13) % 360) / 60.0;
  const double sat = 0.25 + (hash3(seed, 11, 17) % 1000) / 1000.0 * 0.3;
  const double val = 150 + (hash3(seed, 13, 19) % 60);
  // HSV with a narrow saturation range; boxes read as muted colours.
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
  Material m{{0, 0, 0}, 0.3, 0.8};
  const double rgb[6][3] = {{val, t, p}, {q, val, p}, {p, val, t}, {p, q, val}, {t, p, val}, {val, p, q}};
  for (int c = 0; c < 3; ++c) m.base[c] = rgb[sector][c];
  return m;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  int object = -1;  // -1 ground, >= 0 box index
  bool any = false;
};

void intersect_box(const SceneBox& box, int index, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   Hit& best) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < box.min_corner[a] || o[a] > box.max_corner[a]) return;
      continue;
    }
    double t0 = (box.min_corner[a] - o[a]) / d[a];
    double t1 = (box.max_corner[a] - o[a]) / d[a];
    double s = -1.0;  // entering through the min face
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = a;
      sign = s;
    }
    t_far = std::min(t_far, t1);
  }
  if (axis < 0 || t_near > t_far || t_near <= 1e-9 || t_near >= best.t) return;
  best.t = t_near;
  best.normal = Eigen::Vector3d::Zero();
  best.normal[axis] = sign;
  best.object = index;
  best.any = true;
}

const Eigen::Vector3d kLight = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();

}  // namespace

CameraIntrinsics default_intrinsics() { return {160.0, 160.0, 143.5, 43.5, 288, 88}; }
CameraIntrinsics desk_intrinsics() { return {40.0, 40.0, 35.5, 11.5, 72, 24}; }

void SyntheticSceneSpec::validate() const {
  intrinsics.validate();
  if (frame_count < 1) throw std::invalid_argument("scene: frame_count must be at least 1");
  if (trajectory.size() != 1 && trajectory.size() != static_cast<std::size_t>(frame_count)) {
    throw std::invalid_argument("scene: trajectory needs 1 or frame_count poses");
  }
  for (const auto& b : boxes) {
    if (!(b.min_corner.array() < b.max_corner.array()).all()) {
      throw std::invalid_argument("scene: box min corner must be below max corner");
    }
  }
  for (const auto& p : trajectory) {
    (void)pose_to_transform(p);  // finiteness
    if (ground_height && p.position.z() <= *ground_height) {
      throw std::invalid_argument("scene: camera below the ground plane");
    }
    for (const auto& b : boxes) {
      if ((p.position.array() >= b.min_corner.array()).all() && (p.position.array() <= b.max_corner.array()).all()) {
        throw std::invalid_argument("scene: camera inside a box");
      }
    }
  }
}

const Pose& SyntheticSceneSpec::pose_at(int frame) const {
  return trajectory.size() == 1 ? trajectory.front() : trajectory.at(static_cast<std::size_t>(frame));
}

RenderedView render_view(const SyntheticSceneSpec& scene, const Pose& pose) {
  const CameraIntrinsics& k = scene.intrinsics;
  const RigidTransform cam = pose_to_transform(pose);
  RenderedView view{Image(k.width, k.height, 3), DepthMap(k.width, k.height)};
  const Material ground = ground_material();
  std::vector<Material> materials;
  materials.reserve(scene.boxes.size());
  for (const auto& b : scene.boxes) materials.push_back(box_material(b.texture_seed));
  const double focal = std::sqrt(k.fx * k.fy);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Eigen::Vector3d dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d d = cam.rotation * dir_cam;
      const Eigen::Vector3d& o = cam.translation;
      Hit hit;
      if (scene.ground_height && d.z() < 0.0) {
        const double t = (*scene.ground_height - o.z()) / d.z();
        if (t > 1e-9) {
          hit.t = t;
          hit.normal = Eigen::Vector3d::UnitZ();
          hit.object = -1;
          hit.any = true;
        }
      }
      for (std::size_t i = 0; i < scene.boxes.size(); ++i) intersect_box(scene.boxes[i], static_cast<int>(i), o, d, hit);

      std::uint8_t* px = view.rgb.at(x, y);
      if (!hit.any) {
        const double elev = std::clamp(d.z() / d.norm() * 3.0, 0.0, 1.0);
        const double horizon[3] = {205, 215, 228}, zenith[3] = {120, 158, 212};
        for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::lround(horizon[c] + (zenith[c] - horizon[c]) * elev));
        continue;
      }
      const Eigen::Vector3d p = o + hit.t * d;
      const Material& m = hit.object < 0 ? ground : materials[static_cast<std::size_t>(hit.object)];
      const std::uint32_t seed = hit.object < 0 ? scene.ground_seed : scene.boxes[static_cast<std::size_t>(hit.object)].texture_seed;
      // Surface coordinates: drop the axis the face is normal to.
      double s = 0.0, r = 0.0;
      if (hit.normal.x() != 0.0) {
        s = p.y();
        r = p.z();
      } else if (hit.normal.y() != 0.0) {
        s = p.x();
        r = p.z();
      } else {
        s = p.x();
        r = p.y();
      }
      const double cos_incidence = std::max(std::abs(hit.normal.dot(d.normalized())), 0.05);
      const double footprint = hit.t * d.norm() / (focal * cos_incidence);
      const double n = filtered_noise(s, r, footprint, m.cell, seed);
      const double shade = 0.55 + 0.45 * std::max(0.0, hit.normal.dot(kLight));
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(m.base[c] * (1.0 + m.contrast * n) * shade), 0L, 255L));
      }
      view.depth.at(x, y) = hit.t;  // dir_cam has unit z, so t is camera depth
      view.depth.mask[static_cast<std::size_t>(y) * k.width + x] = 1;
    }
  }
  return view;
}

std::vector<Frame> render_synthetic_sequence(const SyntheticSceneSpec& scene) {
  scene.validate();
  std::vector<Frame> frames(static_cast<std::size_t>(scene.frame_count));
  for (int i = 0; i < scene.frame_count; ++i) {
    auto view = render_view(scene, scene.pose_at(i));
    frames[static_cast<std::size_t>(i)] = Frame{std::move(view.rgb), std::move(view.depth), scene.pose_at(i)};
  }
  return frames;
}

SyntheticSceneSpec random_street_scene(const StreetSceneOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  SyntheticSceneSpec scene;
  scene.intrinsics = options.intrinsics;
  scene.frame_count = options.frames;
  scene.ground_height = 0.0;
  scene.ground_seed = static_cast<std::uint32_t>(rng());

  Pose pose;
  pose.position = Eigen::Vector3d(uniform(-1.0, 1.0), 0.0, options.camera_height);
  pose.yaw = uniform(-0.05, 0.05);
  const double speed = uniform(options.speed_min, options.speed_max);
  const double yaw_rate = uniform(-options.yaw_rate_max, options.yaw_rate_max);
  double travelled = 0.0;
  for (int i = 0; i < options.frames; ++i) {
    scene.trajectory.push_back(pose);
    pose.position += speed * Eigen::Vector3d(-std::sin(pose.yaw), std::cos(pose.yaw), 0.0);
    pose.yaw += yaw_rate;
    travelled += speed;
  }

  std::uniform_int_distribution<int> count(options.min_boxes, options.max_boxes);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    SceneBox b;
    const double side = (i % 2 == 0) ? -1.0 : 1.0;
    const double near_x = uniform(3.0, 6.0), depth_x = uniform(2.0, 6.0);
    const double y0 = uniform(4.0, 45.0), len = uniform(3.0, 10.0);
    const double height = uniform(1.5, 7.0);
    b.min_corner = Eigen::Vector3d(side < 0 ? -near_x - depth_x : near_x, y0, 0.0);
    b.max_corner = Eigen::Vector3d(side < 0 ? -near_x : near_x + depth_x, y0 + len, height);
    b.texture_seed = static_cast<std::uint32_t>(rng());
    scene.boxes.push_back(b);
  }
  if (uniform(0.0, 1.0) < 0.5) {
    // Cross-street block well beyond the end of the trajectory.
    SceneBox b;
    const double y0 = travelled + uniform(25.0, 50.0);
    const double half = uniform(4.0, 12.0), cx = uniform(-4.0, 4.0);
    b.min_corner = Eigen::Vector3d(cx - half, y0, 0.0);
    b.max_corner = Eigen::Vector3d(cx + half, y0 + uniform(3.0, 8.0), uniform(3.0, 10.0));
    b.texture_seed = static_cast<std::uint32_t>(rng());
    scene.boxes.push_back(b);
  }
  scene.validate();
  return scene;
}

}  // namespace geowarp
