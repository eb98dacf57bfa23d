#include "geowarp/depth_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geowarp {

void DepthLabelConfig::validate() const {
  if (!(d_min > 0.0 && d_min < d_max)) throw std::invalid_argument("depth labels: need 0 < d_min < d_max");
  if (!(label_lo >= 0.0 && label_lo < label_hi && label_hi <= 1.0)) {
    throw std::invalid_argument("depth labels: need 0 <= label_lo < label_hi <= 1");
  }
}

double normalize_depth(double depth, const DepthLabelConfig& cfg) {
  if (!(depth >= cfg.d_min && depth <= cfg.d_max)) {
    throw std::out_of_range("normalize_depth: " + std::to_string(depth) + " m outside [" +
                            std::to_string(cfg.d_min) + ", " + std::to_string(cfg.d_max) + "]");
  }
  const double span = cfg.label_hi - cfg.label_lo;
  if (cfg.transform == LabelTransform::kLog) {
    const double t = (std::log(cfg.d_max) - std::log(depth)) / (std::log(cfg.d_max) - std::log(cfg.d_min));
    return cfg.label_lo + t * span;
  }
  const double inv_lo = cfg.d_min / cfg.d_max;
  const double inv = cfg.d_min / depth;
  return cfg.label_lo + (inv - inv_lo) * span / (1.0 - inv_lo);
}

double denormalize_label(double label, const DepthLabelConfig& cfg) {
  const double l = std::clamp(label, cfg.label_lo, cfg.label_hi);
  const double t = (l - cfg.label_lo) / (cfg.label_hi - cfg.label_lo);
  if (cfg.transform == LabelTransform::kLog) {
    return std::exp(std::log(cfg.d_max) - t * (std::log(cfg.d_max) - std::log(cfg.d_min)));
  }
  const double inv_lo = cfg.d_min / cfg.d_max;
  const double inv = inv_lo + t * (1.0 - inv_lo);
  return cfg.d_min / inv;
}

ScanProjection scan_to_depth_map(const LidarScan& scan, const CameraIntrinsics& k,
                                 const DepthLabelConfig& cfg) {
  k.validate();
  ScanProjection out{DepthMap(k.width, k.height), 0};
  for (const auto& p : scan.points) {
    const Eigen::Vector3d c = scan.sensor_to_camera.apply(p);
    const double z = c.z();
    if (!c.allFinite() || z < cfg.d_min || z > cfg.d_max) {
      ++out.culled;
      continue;
    }
    const double u = std::round(k.fx * c.x() / z + k.cx);
    const double v = std::round(k.fy * c.y() / z + k.cy);
    if (u < 0 || v < 0 || u >= k.width || v >= k.height) {
      ++out.culled;
      continue;
    }
    const int x = static_cast<int>(u), y = static_cast<int>(v);
    const std::size_t i = static_cast<std::size_t>(y) * k.width + x;
    if (!out.depth.mask[i] || z < out.depth.values[i]) {
      out.depth.values[i] = z;
      out.depth.mask[i] = 1;
    }
  }
  return out;
}

LabelMap make_labels(const DepthMap& depth, const DepthLabelConfig& cfg) {
  LabelMap out{depth.width, depth.height, std::vector<float>(depth.size(), 0.0f),
               std::vector<std::uint8_t>(depth.size(), 0)};
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double d = depth.values[i];
    if (!depth.mask[i] || !(d >= cfg.d_min && d <= cfg.d_max)) continue;
    out.labels[i] = static_cast<float>(normalize_depth(d, cfg));
    out.mask[i] = 1;
  }
  return out;
}

std::vector<SequenceRecord> split_sequences(const std::vector<Frame>& video, int k, int stride) {
  if (k < 2) throw std::invalid_argument("split_sequences: k must be at least 2");
  if (stride <= 0) stride = k;
  std::vector<SequenceRecord> out;
  for (std::size_t start = 0; start + static_cast<std::size_t>(k) <= video.size(); start += stride) {
    SequenceRecord seq;
    seq.frames.assign(video.begin() + static_cast<std::ptrdiff_t>(start),
                      video.begin() + static_cast<std::ptrdiff_t>(start + k));
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace geowarp
