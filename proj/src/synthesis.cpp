#include "geowarp/synthesis.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geowarp {
namespace {

void check_inputs(const Image& rgb, const DepthMap& depth, const CameraIntrinsics& k) {
  k.validate();
  if (rgb.channels != 3 || rgb.width != k.width || rgb.height != k.height || depth.width != k.width ||
      depth.height != k.height || depth.values.size() != depth.mask.size()) {
    throw std::invalid_argument("warp_forward: image " + std::to_string(rgb.width) + "x" +
                                std::to_string(rgb.height) + ", depth " + std::to_string(depth.width) + "x" +
                                std::to_string(depth.height) + " and intrinsics " + std::to_string(k.width) + "x" +
                                std::to_string(k.height) + " disagree");
  }
}

PointCloud coloured_cloud(const Image& rgb, const DepthMap& depth, const CameraIntrinsics& k) {
  PointCloud cloud = unproject(depth, k);
  for (auto& p : cloud) {
    const std::uint8_t* px = rgb.pixels.data() + static_cast<std::size_t>(p.source_index) * 3;
    std::copy(px, px + 3, p.rgb);
  }
  return cloud;
}

// Up to four target pixels of a projected point, as flat indices.
int footprint(const ProjectedPoint& p, const CameraIntrinsics& k, Footprint kind, std::int32_t out[4]) {
  int n = 0;
  auto push = [&](double x, double y) {
    if (x < 0 || y < 0 || x > k.width - 1 || y > k.height - 1) return;
    out[n++] = static_cast<std::int32_t>(y) * k.width + static_cast<std::int32_t>(x);
  };
  if (kind == Footprint::kSingle) {
    push(std::floor(p.u + 0.5), std::floor(p.v + 0.5));
    return n;
  }
  const double x0 = std::floor(p.u), x1 = std::ceil(p.u);
  const double y0 = std::floor(p.v), y1 = std::ceil(p.v);
  push(x0, y0);
  if (x1 != x0) push(x1, y0);
  if (y1 != y0) {
    push(x0, y1);
    if (x1 != x0) push(x1, y1);
  }
  return n;
}

bool wins(const ProjectedPoint& a, const ProjectedPoint& b) {
  return a.depth < b.depth || (a.depth == b.depth && a.source_index < b.source_index);
}

FramePrediction blank(const CameraIntrinsics& k) {
  FramePrediction out;
  out.rgb = Image(k.width, k.height, 3, 0);
  out.depth = DepthMap(k.width, k.height);
  out.coverage.assign(static_cast<std::size_t>(k.width) * k.height, 0);
  return out;
}

void write_pixel(FramePrediction& out, std::size_t pixel, const ProjectedPoint& p) {
  std::copy(p.rgb, p.rgb + 3, out.rgb.pixels.data() + pixel * 3);
  out.depth.values[pixel] = p.depth;
  out.depth.mask[pixel] = 1;
  out.coverage[pixel] = 1;
}

void count_gaps(FramePrediction& out) {
  out.stats.gaps = static_cast<std::size_t>(std::count(out.coverage.begin(), out.coverage.end(), 0));
}

}  // namespace

void SplatConfig::validate() const {
  if (!(z_min > 0.0)) throw std::invalid_argument("splat z_min must be positive");
}

double FramePrediction::coverage_fraction() const {
  if (coverage.empty()) return 0.0;
  return static_cast<double>(std::count(coverage.begin(), coverage.end(), 1)) / static_cast<double>(coverage.size());
}

namespace reference {

FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg) {
  check_inputs(rgb, depth, k);
  cfg.validate();
  FramePrediction out = blank(k);
  const PointCloud cloud = apply_transform(coloured_cloud(rgb, depth, k), motion);
  ProjectionStats ps;
  const auto projected = project(cloud, k, cfg.z_min, &ps);
  out.stats.points = cloud.size();
  out.stats.culled_near = ps.culled_near;
  out.stats.culled_outside = ps.culled_outside;

  std::vector<std::int32_t> owner(out.coverage.size(), -1);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    std::int32_t pixels[4];
    const int n = footprint(projected[i], k, cfg.footprint, pixels);
    if (n == 0) ++out.stats.culled_outside;
    for (int j = 0; j < n; ++j) {
      auto& o = owner[static_cast<std::size_t>(pixels[j])];
      if (o >= 0) {
        ++out.stats.overwritten;
        if (!wins(projected[i], projected[static_cast<std::size_t>(o)])) continue;
      }
      o = static_cast<std::int32_t>(i);
    }
  }
  for (std::size_t px = 0; px < owner.size(); ++px)
    if (owner[px] >= 0) write_pixel(out, px, projected[static_cast<std::size_t>(owner[px])]);
  count_gaps(out);
  return out;
}

}  // namespace reference

namespace parallel {

FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg) {
  check_inputs(rgb, depth, k);
  cfg.validate();
  FramePrediction out = blank(k);
  const PointCloud source = coloured_cloud(rgb, depth, k);
  out.stats.points = source.size();

  // Phase 1: transform and project contiguous chunks in parallel, then
  // concatenate in chunk order.
  const int chunks = std::max(1, omp_get_max_threads());
  std::vector<std::vector<ProjectedPoint>> parts(static_cast<std::size_t>(chunks));
  std::vector<ProjectionStats> part_stats(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < chunks; ++c) {
    const std::size_t begin = source.size() * static_cast<std::size_t>(c) / static_cast<std::size_t>(chunks);
    const std::size_t end = source.size() * static_cast<std::size_t>(c + 1) / static_cast<std::size_t>(chunks);
    const PointCloud moved = apply_transform(std::span(source).subspan(begin, end - begin), motion);
    parts[static_cast<std::size_t>(c)] = project(moved, k, cfg.z_min, &part_stats[static_cast<std::size_t>(c)]);
  }
  std::vector<ProjectedPoint> projected;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    projected.insert(projected.end(), parts[c].begin(), parts[c].end());
    out.stats.culled_near += part_stats[c].culled_near;
    out.stats.culled_outside += part_stats[c].culled_outside;
  }

  // Phase 2: bucket footprint writes by output row.
  const int n_points = static_cast<int>(projected.size());
  std::vector<std::int32_t> pixels(projected.size() * 4);
  std::vector<std::uint8_t> counts(projected.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_points; ++i) {
    const auto u = static_cast<std::size_t>(i);
    counts[u] = static_cast<std::uint8_t>(footprint(projected[u], k, cfg.footprint, &pixels[u * 4]));
  }
  std::vector<std::size_t> row_start(static_cast<std::size_t>(k.height) + 1, 0);
  for (std::size_t i = 0; i < projected.size(); ++i) {
    if (counts[i] == 0) ++out.stats.culled_outside;
    for (int j = 0; j < counts[i]; ++j) ++row_start[static_cast<std::size_t>(pixels[i * 4 + j] / k.width) + 1];
  }
  for (int y = 0; y < k.height; ++y) row_start[static_cast<std::size_t>(y) + 1] += row_start[static_cast<std::size_t>(y)];
  std::vector<std::size_t> fill(row_start.begin(), row_start.end() - 1);
  std::vector<std::pair<std::int32_t, std::int32_t>> writes(row_start.back());  // (pixel, point)
  for (std::size_t i = 0; i < projected.size(); ++i) {
    for (int j = 0; j < counts[i]; ++j) {
      const std::int32_t px = pixels[i * 4 + j];
      writes[fill[static_cast<std::size_t>(px / k.width)]++] = {px, static_cast<std::int32_t>(i)};
    }
  }

  // Phase 3: rows are independent; the (depth, index) minimum does not depend
  // on the order candidates are visited.
  std::vector<std::int32_t> owner(out.coverage.size(), -1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < k.height; ++y) {
    for (std::size_t w = row_start[static_cast<std::size_t>(y)]; w < row_start[static_cast<std::size_t>(y) + 1]; ++w) {
      auto& o = owner[static_cast<std::size_t>(writes[w].first)];
      const auto& cand = projected[static_cast<std::size_t>(writes[w].second)];
      if (o < 0 || wins(cand, projected[static_cast<std::size_t>(o)])) o = writes[w].second;
    }
    for (int x = 0; x < k.width; ++x) {
      const std::size_t px = static_cast<std::size_t>(y) * k.width + x;
      if (owner[px] >= 0) write_pixel(out, px, projected[static_cast<std::size_t>(owner[px])]);
    }
  }
  count_gaps(out);
  out.stats.overwritten = writes.size() - (out.coverage.size() - out.stats.gaps);
  return out;
}

}  // namespace parallel

FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg) {
  return parallel::warp_forward(rgb, depth, motion, k, cfg);
}

FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const EgoMotion& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg) {
  return parallel::warp_forward(rgb, depth, motion.to_transform(), k, cfg);
}

DepthMap labels_to_depth(const nn::Tensor<float>& labels, const DepthLabelConfig& cfg) {
  if (labels.rank() != 4 || labels.dim(0) != 1 || labels.dim(3) != 1) {
    throw std::invalid_argument("labels_to_depth: expected a 1xHxWx1 tensor, got " + nn::shape_str(labels.shape()));
  }
  DepthMap d(labels.dim(2), labels.dim(1));
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.values[i] = denormalize_label(labels[i], cfg);
    d.mask[i] = 1;
  }
  return d;
}

FramePrediction predict_next(const DepthPredictor& predictor, const std::vector<Image>& frames,
                             const std::vector<Pose>& poses, const CameraIntrinsics& k, const SplatConfig& cfg) {
  if (frames.empty() || poses.size() != frames.size() + 1) {
    throw std::invalid_argument("predict_next: need k-1 >= 1 frames and k poses");
  }
  const DepthMap depth = predictor(frames);
  const EgoMotion motion = ego_motion(poses[poses.size() - 2], poses.back());
  return warp_forward(frames.back(), depth, motion, k, cfg);
}

DepthPredictor model_predictor(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                               const DepthLabelConfig& labels) {
  return [&params, config, labels](const std::vector<Image>& frames) {
    std::vector<nn::Tensor<float>> inputs;
    inputs.reserve(frames.size());
    for (const auto& f : frames) inputs.push_back(image_to_tensor<float>(f));
    return labels_to_depth(forward_sequence(params, config, inputs).back(), labels);
  };
}

FramePrediction predict_next(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                             const std::vector<Image>& frames, const std::vector<Pose>& poses,
                             const CameraIntrinsics& k, const DepthLabelConfig& labels, const SplatConfig& cfg) {
  return predict_next(model_predictor(params, config, labels), frames, poses, k, cfg);
}

std::vector<FramePrediction> simulate_hypothetical(const Image& rgb, const DepthMap& depth,
                                                   const std::vector<EgoMotion>& motions, const CameraIntrinsics& k,
                                                   const SplatConfig& cfg) {
  std::vector<FramePrediction> out;
  out.reserve(motions.size());
  for (const auto& m : motions) out.push_back(warp_forward(rgb, depth, m, k, cfg));
  return out;
}

}  // namespace geowarp
