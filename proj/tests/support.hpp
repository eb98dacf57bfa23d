#pragma once
// Shared fixtures for the unit and acceptance tests: finite-difference
// gradient checks, small synthetic scenes and a source-visibility mask.

#include "geowarp/geometry.hpp"
#include "geowarp/nn/ops.hpp"
#include "geowarp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace geowarp::testing {

using TensorD = nn::Tensor<double>;
using VarD = nn::Var<double>;
using TapeD = nn::Tape<double>;

inline TensorD random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Scalar built from leaf variables on a fresh tape.
using ScalarGraph = std::function<VarD(TapeD&, const std::vector<VarD>&)>;

// sum(x * w) for a fixed random w, so every output element gets a distinct
// upstream gradient.
inline VarD weighted_sum(VarD x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  VarD w = x.tape->leaf(random_tensor(x.shape(), rng));
  return nn::sum(nn::mul(x, w));
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences against the tape gradient. With `sample` > 0 only that
// many randomly chosen scalars (over all inputs) are perturbed.
inline GradCheck check_gradients(const ScalarGraph& f, std::vector<TensorD> inputs, double h = 1e-6,
                                 std::size_t sample = 0, std::uint64_t seed = 7, double floor = 1e-6) {
  auto eval = [&](bool grads, std::vector<TensorD>* out) {
    TapeD tape;
    std::vector<VarD> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, grads));
    VarD y = f(tape, leaves);
    const double v = y.value()[0];
    if (grads) {
      tape.backward(y);
      for (const auto& l : leaves) out->push_back(tape.grad_of(l));
    }
    return v;
  };
  std::vector<TensorD> analytic;
  eval(true, &analytic);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].size(); ++j) coords.emplace_back(i, j);
  if (sample > 0 && sample < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(sample);
  }

  GradCheck r;
  for (auto [i, j] : coords) {
    const double x0 = inputs[i][j];
    inputs[i][j] = x0 + h;
    const double up = eval(false, nullptr);
    inputs[i][j] = x0 - h;
    const double down = eval(false, nullptr);
    inputs[i][j] = x0;
    const double numeric = (up - down) / (2 * h);
    const double err = relative_error(analytic[i][j], numeric, floor);
    if (err > r.max_rel) {
      r.max_rel = err;
      r.worst = "input " + std::to_string(i) + "[" + std::to_string(j) + "] analytic " +
                std::to_string(analytic[i][j]) + " numeric " + std::to_string(numeric);
    }
    ++r.checked;
  }
  return r;
}

inline Pose pose_at(double x, double y, double z, double yaw = 0.0, double pitch = 0.0, double roll = 0.0) {
  Pose p;
  p.position = {x, y, z};
  p.yaw = yaw;
  p.pitch = pitch;
  p.roll = roll;
  return p;
}

// Fronto-parallel textured wall `distance` metres ahead of a camera at the
// origin; frame i sits `advance[i]` metres further forward.
inline SyntheticSceneSpec plane_scene(double distance, const CameraIntrinsics& k,
                                      const std::vector<double>& advance = {0.0}) {
  SyntheticSceneSpec s;
  s.intrinsics = k;
  s.ground_height.reset();
  s.boxes.push_back({{-1e4, distance, -1e4}, {1e4, distance + 1.0, 1e4}, 17});
  for (double a : advance) s.trajectory.push_back(pose_at(0.0, a, 0.0));
  s.frame_count = static_cast<int>(advance.size());
  return s;
}

// Road plus one box on each side, camera driving forward with a slight turn.
inline SyntheticSceneSpec two_box_scene(std::uint64_t seed, const CameraIntrinsics& k, int frames = 2) {
  std::mt19937_64 rng(seed);
  auto u = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SyntheticSceneSpec s;
  s.intrinsics = k;
  s.ground_height = 0.0;
  s.ground_seed = static_cast<std::uint32_t>(rng());
  const double left = u(2.5, 5.0), right = u(2.5, 5.0);
  const double y_left = u(6.0, 15.0), y_right = u(6.0, 15.0);
  s.boxes.push_back({{-left - u(2.0, 4.0), y_left, 0.0}, {-left, y_left + u(3.0, 8.0), u(2.0, 6.0)},
                     static_cast<std::uint32_t>(rng())});
  s.boxes.push_back({{right, y_right, 0.0}, {right + u(2.0, 4.0), y_right + u(3.0, 8.0), u(2.0, 6.0)},
                     static_cast<std::uint32_t>(rng())});
  const double speed = u(0.4, 1.0), yaw_rate = u(-0.02, 0.02);
  Pose p = pose_at(u(-0.5, 0.5), 0.0, 1.5, u(-0.05, 0.05));
  for (int i = 0; i < frames; ++i) {
    s.trajectory.push_back(p);
    p.position += speed * Eigen::Vector3d(-std::sin(p.yaw), std::cos(p.yaw), 0.0);
    p.yaw += yaw_rate;
  }
  s.frame_count = frames;
  return s;
}

// Pixels of the later frame whose surface point was visible from the earlier
// camera: the point, moved back into the earlier frame, must land inside the
// image and agree with the earlier depth (relative tolerance) on every pixel
// of its splat footprint.
inline std::vector<std::uint8_t> visible_in_source(const DepthMap& prev, const DepthMap& next,
                                                   const RigidTransform& prev_to_next, const CameraIntrinsics& k,
                                                   double rel_tol = 0.03) {
  const RigidTransform back = prev_to_next.inverse();
  std::vector<std::uint8_t> out(next.size(), 0);
  for (int y = 0; y < next.height; ++y) {
    for (int x = 0; x < next.width; ++x) {
      if (!next.valid(x, y)) continue;
      const double d = next.at(x, y);
      const Eigen::Vector3d q((x - k.cx) * d / k.fx, (y - k.cy) * d / k.fy, d);
      const Eigen::Vector3d p = back.apply(q);
      if (p.z() <= 0) continue;
      const double u = k.fx * p.x() / p.z() + k.cx;
      const double v = k.fy * p.y() / p.z() + k.cy;
      const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
      bool ok = u0 >= 0 && v0 >= 0 && u0 + 1 < prev.width && v0 + 1 < prev.height;
      for (int dy = 0; ok && dy <= 1; ++dy)
        for (int dx = 0; ok && dx <= 1; ++dx)
          ok = prev.valid(u0 + dx, v0 + dy) && std::abs(prev.at(u0 + dx, v0 + dy) - p.z()) <= rel_tol * p.z();
      out[static_cast<std::size_t>(y) * next.width + x] = ok ? 1 : 0;
    }
  }
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("geowarp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace geowarp::testing
