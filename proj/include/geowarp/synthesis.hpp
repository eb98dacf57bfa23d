#pragma once

// Forward warping of an RGB-D frame through a rigid camera motion.
//
// Every valid source pixel becomes a 3-D point, is moved by the motion and
// reprojected. A point at continuous (u, v) writes its depth and colour to
// the pixels {floor(u), ceil(u)} x {floor(v), ceil(v)} (quad footprint) or to
// the nearest pixel (single footprint). The nearest point wins each pixel,
// with ties going to the smaller source index. Pixels nobody writes are gaps:
// RGB (0,0,0), coverage 0, depth masked out.

#include "geowarp/depth_data.hpp"
#include "geowarp/geometry.hpp"
#include "geowarp/image.hpp"
#include "geowarp/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace geowarp {

enum class Footprint { kSingle, kQuad };

struct SplatConfig {
  Footprint footprint = Footprint::kQuad;
  double z_min = kDefaultZMin;

  void validate() const;  // throws std::invalid_argument unless z_min > 0
};

struct WarpStats {
  std::size_t points = 0;         // valid source pixels
  std::size_t culled_near = 0;    // z <= z_min after the motion
  std::size_t culled_outside = 0; // footprint entirely off the image
  std::size_t overwritten = 0;    // pixel writes that lost the depth test
  std::size_t gaps = 0;           // uncovered output pixels
};

struct FramePrediction {
  Image rgb;
  DepthMap depth;
  std::vector<std::uint8_t> coverage;  // 1 where any point landed
  WarpStats stats;

  double coverage_fraction() const;
};

// Throws std::invalid_argument when rgb, depth and k disagree on size.
FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const EgoMotion& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg = {});
FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg = {});

namespace reference {
// Serial version: points are splatted one by one in source order.
FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg = {});
}  // namespace reference

namespace parallel {
// Two-phase version: candidates are generated in parallel, bucketed by
// output row and resolved per row by (depth, source index).
FramePrediction warp_forward(const Image& rgb, const DepthMap& depth, const RigidTransform& motion,
                             const CameraIntrinsics& k, const SplatConfig& cfg = {});
}  // namespace parallel

// Dense metric depth from a 1xHxWx1 label tensor.
DepthMap labels_to_depth(const nn::Tensor<float>& labels, const DepthLabelConfig& cfg);

// Maps frames X_1..X_j to metric depth for X_j.
using DepthPredictor = std::function<DepthMap(const std::vector<Image>&)>;

// Next frame from frames X_1..X_{k-1} and poses P_1..P_k: depth for X_{k-1}
// is warped by ego_motion(P_{k-1}, P_k). Throws std::invalid_argument unless
// poses has one more entry than frames.
FramePrediction predict_next(const DepthPredictor& predictor, const std::vector<Image>& frames,
                             const std::vector<Pose>& poses, const CameraIntrinsics& k, const SplatConfig& cfg = {});

// The same with the network as predictor.
DepthPredictor model_predictor(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                               const DepthLabelConfig& labels = {});
FramePrediction predict_next(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                             const std::vector<Image>& frames, const std::vector<Pose>& poses,
                             const CameraIntrinsics& k, const DepthLabelConfig& labels = {},
                             const SplatConfig& cfg = {});

// One warp of the same frame per candidate motion.
std::vector<FramePrediction> simulate_hypothetical(const Image& rgb, const DepthMap& depth,
                                                   const std::vector<EgoMotion>& motions, const CameraIntrinsics& k,
                                                   const SplatConfig& cfg = {});

}  // namespace geowarp
