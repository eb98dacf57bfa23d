#pragma once

#include "geowarp/geometry.hpp"
#include "geowarp/image.hpp"

#include <cstddef>
#include <vector>

namespace geowarp {

enum class LabelTransform { kInverse, kLog };

// Metric depth <-> network label mapping. With the inverse transform the
// label is an affine map of d_min / d that sends d_min to label_hi and d_max
// to label_lo, so nearer points get larger labels.
struct DepthLabelConfig {
  double d_min = 3.0;
  double d_max = 80.0;
  double label_lo = 0.25;
  double label_hi = 0.75;
  LabelTransform transform = LabelTransform::kInverse;

  void validate() const;
};

// Throws std::out_of_range for d outside [d_min, d_max].
double normalize_depth(double depth, const DepthLabelConfig& cfg);
// Labels outside [label_lo, label_hi] are clamped first.
double denormalize_label(double label, const DepthLabelConfig& cfg);

struct LidarScan {
  std::vector<Eigen::Vector3d> points;  // sensor frame
  RigidTransform sensor_to_camera;
};

struct ScanProjection {
  DepthMap depth;
  std::size_t culled = 0;
};

// Sparse label map: each in-range point lands on its nearest pixel, nearer
// points win collisions, untouched pixels stay masked out.
ScanProjection scan_to_depth_map(const LidarScan& scan, const CameraIntrinsics& k,
                                 const DepthLabelConfig& cfg = {});

// Label tensor data for one depth map: labels are zero wherever the mask is
// false, and the mask drops pixels outside [d_min, d_max].
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<float> labels;
  std::vector<std::uint8_t> mask;
};
LabelMap make_labels(const DepthMap& depth, const DepthLabelConfig& cfg);

struct Frame {
  Image rgb;
  DepthMap depth;  // metric, masked
  Pose pose;
};

struct SequenceRecord {
  std::vector<Frame> frames;
  std::size_t size() const { return frames.size(); }
};

// Consecutive windows of length k starting every `stride` frames (stride 0
// means stride = k). Windows that would run past the end are dropped.
// Throws std::invalid_argument for k < 2.
std::vector<SequenceRecord> split_sequences(const std::vector<Frame>& video, int k, int stride = 0);

}  // namespace geowarp
