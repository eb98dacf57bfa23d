#pragma once

// Masked image quality metrics and the next-frame evaluation harness.
// Masks hold one byte per pixel, nonzero = evaluate.

#include "geowarp/depth_data.hpp"
#include "geowarp/image.hpp"
#include "geowarp/model.hpp"
#include "geowarp/synthesis.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace geowarp {

// 10 log10(255^2 / MSE) over masked pixels and all three channels; +infinity
// when the images agree. Throws std::invalid_argument on an empty mask or a
// shape mismatch.
double psnr(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double min_coverage = 0.5;  // masked share of a window's weight
};

struct SsimResult {
  double mean = 0.0;
  std::size_t pixels = 0;  // evaluated window centres
};

// Mean SSIM on BT.601 luma. Window weights are renormalised over masked
// pixels and centres whose window is less than min_coverage masked are
// skipped.
SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options = {});
// Throws std::invalid_argument when no pixel can be evaluated.
double ssim(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask, const SsimOptions& options = {});

namespace reference {
SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options = {});
}
namespace parallel {
SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options = {});
}

// Per-pixel SSIM map (NaN where skipped), used by tests.
std::vector<double> ssim_map(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                             const SsimOptions& options = {});

struct FrameIndexMetrics {
  int frame_index = 0;  // frames seen before the predicted one
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  std::size_t n = 0;
};

struct MetricReport {
  std::string mode;  // "predicted" or "oracle"
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t pixels = 0;
  std::size_t predictions = 0;
  double depth_l2 = 0.0;  // masked label-space L2 of the predicted depth
  std::vector<FrameIndexMetrics> per_frame;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  // frame_index,psnr_mean,ssim_mean,n
  std::string per_frame_csv() const;
};

struct EvalOptions {
  DepthLabelConfig labels;
  SplatConfig splat;
  SsimOptions ssim;
};

// For every sequence and every i in 1..k-1, frame i+1 is predicted from
// frames 1..i and scored on the warp's coverage mask.
MetricReport evaluate_model(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                            const std::vector<SequenceRecord>& sequences, const CameraIntrinsics& k,
                            const EvalOptions& options = {});
// Same, warping with each frame's true depth.
MetricReport evaluate_oracle(const std::vector<SequenceRecord>& sequences, const CameraIntrinsics& k,
                             const EvalOptions& options = {});

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const MetricReport& report);

// JSON cannot carry infinities; they travel as the string "inf".
nlohmann::json metric_to_json(double v);
double metric_from_json(const nlohmann::json& j);
std::string metric_to_string(double v);

}  // namespace geowarp
