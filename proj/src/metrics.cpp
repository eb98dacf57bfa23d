#include "geowarp/metrics.hpp"

#include "geowarp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace geowarp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(const char* op, const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  if (!a.same_shape(b) || a.channels != 3 || mask.size() != a.pixel_count()) {
    throw std::invalid_argument(std::string(op) + ": images and mask must share an RGB shape");
  }
}

std::vector<double> luma(const Image& im) {
  std::vector<double> y(im.pixel_count());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::uint8_t* p = im.pixels.data() + i * 3;
    y[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return y;
}

std::vector<double> gaussian_window(const SsimOptions& o) {
  if (o.window < 1 || o.window % 2 == 0 || !(o.sigma > 0.0)) {
    throw std::invalid_argument("ssim: window must be odd and sigma positive");
  }
  const int r = o.window / 2;
  std::vector<double> w(static_cast<std::size_t>(o.window * o.window));
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * o.sigma * o.sigma));
      w[static_cast<std::size_t>((dy + r) * o.window + dx + r)] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

struct SsimInputs {
  int width;
  int height;
  std::vector<double> x;
  std::vector<double> y;
  std::span<const std::uint8_t> mask;
  std::vector<double> window;
  SsimOptions options;
  double c1;
  double c2;
};

SsimInputs prepare(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask, const SsimOptions& o) {
  check_pair("ssim", pred, gt, mask);
  return {pred.width, pred.height, luma(pred), luma(gt), mask, gaussian_window(o), o,
          (o.k1 * 255.0) * (o.k1 * 255.0), (o.k2 * 255.0) * (o.k2 * 255.0)};
}

// SSIM at one centre, NaN when the centre is masked out or its window is too
// sparsely covered.
double ssim_at(const SsimInputs& s, int cx, int cy) {
  if (!s.mask[static_cast<std::size_t>(cy) * s.width + cx]) return kNaN;
  const int r = s.options.window / 2;
  double wsum = 0.0, mx = 0.0, my = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    const int py = cy + dy;
    if (py < 0 || py >= s.height) continue;
    for (int dx = -r; dx <= r; ++dx) {
      const int px = cx + dx;
      if (px < 0 || px >= s.width) continue;
      const std::size_t i = static_cast<std::size_t>(py) * s.width + px;
      if (!s.mask[i]) continue;
      const double w = s.window[static_cast<std::size_t>((dy + r) * s.options.window + dx + r)];
      wsum += w;
      mx += w * s.x[i];
      my += w * s.y[i];
    }
  }
  if (wsum < s.options.min_coverage) return kNaN;
  mx /= wsum;
  my /= wsum;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    const int py = cy + dy;
    if (py < 0 || py >= s.height) continue;
    for (int dx = -r; dx <= r; ++dx) {
      const int px = cx + dx;
      if (px < 0 || px >= s.width) continue;
      const std::size_t i = static_cast<std::size_t>(py) * s.width + px;
      if (!s.mask[i]) continue;
      const double w = s.window[static_cast<std::size_t>((dy + r) * s.options.window + dx + r)] / wsum;
      const double ex = s.x[i] - mx, ey = s.y[i] - my;
      vx += w * ex * ex;
      vy += w * ey * ey;
      cxy += w * ex * ey;
    }
  }
  return ((2.0 * mx * my + s.c1) * (2.0 * cxy + s.c2)) / ((mx * mx + my * my + s.c1) * (vx + vy + s.c2));
}

struct RowSum {
  double sum = 0.0;
  std::size_t count = 0;
};

RowSum ssim_row(const SsimInputs& s, int y) {
  RowSum r;
  for (int x = 0; x < s.width; ++x) {
    const double v = ssim_at(s, x, y);
    if (std::isnan(v)) continue;
    r.sum += v;
    ++r.count;
  }
  return r;
}

SsimResult combine(const std::vector<RowSum>& rows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    sum += r.sum;
    count += r.count;
  }
  return {count ? sum / static_cast<double>(count) : 0.0, count};
}

}  // namespace

double psnr(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask) {
  check_pair("psnr", pred, gt, mask);
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pred.pixels[i * 3 + c]) - gt.pixels[i * 3 + c];
      se += d * d;
    }
    n += 3;
  }
  if (n == 0) throw std::invalid_argument("psnr: empty mask");
  const double mse = se / static_cast<double>(n);
  if (mse == 0.0) return kInf;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace reference {
SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options) {
  const SsimInputs s = prepare(pred, gt, mask, options);
  std::vector<RowSum> rows(static_cast<std::size_t>(s.height));
  for (int y = 0; y < s.height; ++y) rows[static_cast<std::size_t>(y)] = ssim_row(s, y);
  return combine(rows);
}
}  // namespace reference

namespace parallel {
SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options) {
  const SsimInputs s = prepare(pred, gt, mask, options);
  std::vector<RowSum> rows(static_cast<std::size_t>(s.height));
#pragma omp parallel for schedule(static)
  for (int y = 0; y < s.height; ++y) rows[static_cast<std::size_t>(y)] = ssim_row(s, y);
  return combine(rows);
}
}  // namespace parallel

SsimResult ssim_masked(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                       const SsimOptions& options) {
  return parallel::ssim_masked(pred, gt, mask, options);
}

double ssim(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask, const SsimOptions& options) {
  const SsimResult r = ssim_masked(pred, gt, mask, options);
  if (r.pixels == 0) throw std::invalid_argument("ssim: no pixel has enough masked coverage");
  return r.mean;
}

std::vector<double> ssim_map(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
                             const SsimOptions& options) {
  const SsimInputs s = prepare(pred, gt, mask, options);
  std::vector<double> out(static_cast<std::size_t>(s.width) * s.height);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) out[static_cast<std::size_t>(y) * s.width + x] = ssim_at(s, x, y);
  return out;
}

nlohmann::json metric_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double metric_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw DataError("bad metric value '" + s + "'");
  }
  return j.get<double>();
}

std::string metric_to_string(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& f : per_frame) {
    rows.push_back({{"frame_index", f.frame_index},
                    {"psnr_mean", metric_to_json(f.psnr_mean)},
                    {"ssim_mean", f.ssim_mean},
                    {"n", f.n}});
  }
  return {{"version", 1},         {"mode", mode},   {"psnr", metric_to_json(psnr)},
          {"ssim", ssim},         {"pixels", pixels}, {"predictions", predictions},
          {"depth_l2", depth_l2}, {"per_frame", rows}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.psnr = metric_from_json(j.at("psnr"));
    r.ssim = j.at("ssim").get<double>();
    r.pixels = j.at("pixels").get<std::size_t>();
    r.predictions = j.at("predictions").get<std::size_t>();
    r.depth_l2 = j.value("depth_l2", 0.0);
    for (const auto& f : j.at("per_frame")) {
      r.per_frame.push_back({f.at("frame_index").get<int>(), metric_from_json(f.at("psnr_mean")),
                             f.at("ssim_mean").get<double>(), f.at("n").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad metric report: ") + e.what());
  }
  return r;
}

std::string MetricReport::per_frame_csv() const {
  std::ostringstream out;
  out << "frame_index,psnr_mean,ssim_mean,n\n";
  for (const auto& f : per_frame) {
    out << f.frame_index << ',' << metric_to_string(f.psnr_mean) << ',' << metric_to_string(f.ssim_mean) << ','
        << f.n << '\n';
  }
  return out.str();
}

namespace {

struct Scored {
  int frame_index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t pixels = 0;
  double depth_l2 = 0.0;
};

// Depth used to warp frame j of a sequence, for j in 0..k-2.
using SequenceDepths = std::function<std::vector<DepthMap>(const SequenceRecord&)>;

MetricReport evaluate_with(const std::string& mode, const std::vector<SequenceRecord>& sequences,
                           const CameraIntrinsics& k, const EvalOptions& options, const SequenceDepths& depths) {
  std::vector<std::vector<Scored>> per_seq(sequences.size());
  const int n = static_cast<int>(sequences.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < n; ++s) {
    try {
      const auto& seq = sequences[static_cast<std::size_t>(s)];
      if (seq.size() < 2) throw std::invalid_argument("evaluate: sequences need at least 2 frames");
      const std::vector<DepthMap> d = depths(seq);
      for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
        const auto& cur = seq.frames[j];
        const auto& next = seq.frames[j + 1];
        const FramePrediction p =
            warp_forward(cur.rgb, d[j], ego_motion(cur.pose, next.pose), k, options.splat);
        const std::size_t covered = static_cast<std::size_t>(std::count(p.coverage.begin(), p.coverage.end(), 1));
        if (covered == 0) continue;
        const SsimResult sr = ssim_masked(p.rgb, next.rgb, p.coverage, options.ssim);
        if (sr.pixels == 0) continue;
        Scored sc;
        sc.frame_index = static_cast<int>(j) + 1;
        sc.psnr = psnr(p.rgb, next.rgb, p.coverage);
        sc.ssim = sr.mean;
        sc.pixels = covered;
        per_seq[static_cast<std::size_t>(s)].push_back(sc);
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  MetricReport report;
  report.mode = mode;
  std::map<int, FrameIndexMetrics> by_index;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& seq : per_seq) {
    for (const auto& sc : seq) {
      auto& f = by_index[sc.frame_index];
      f.frame_index = sc.frame_index;
      f.psnr_mean += sc.psnr;
      f.ssim_mean += sc.ssim;
      ++f.n;
      psnr_sum += sc.psnr;
      ssim_sum += sc.ssim;
      report.pixels += sc.pixels;
      ++report.predictions;
    }
  }
  if (report.predictions == 0) throw std::invalid_argument("evaluate: nothing could be scored");
  report.psnr = psnr_sum / static_cast<double>(report.predictions);
  report.ssim = ssim_sum / static_cast<double>(report.predictions);
  for (auto& [index, f] : by_index) {
    f.psnr_mean /= static_cast<double>(f.n);
    f.ssim_mean /= static_cast<double>(f.n);
    report.per_frame.push_back(f);
  }
  return report;
}

}  // namespace

MetricReport evaluate_model(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                            const std::vector<SequenceRecord>& sequences, const CameraIntrinsics& k,
                            const EvalOptions& options) {
  std::vector<double> l2(sequences.size(), 0.0);
  std::vector<std::size_t> l2_n(sequences.size(), 0);
  auto depths = [&](const SequenceRecord& seq) {
    std::vector<nn::Tensor<float>> inputs;
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) inputs.push_back(image_to_tensor<float>(seq.frames[j].rgb));
    const auto preds = forward_sequence(params, config, inputs);
    std::vector<DepthMap> out;
    const auto idx = static_cast<std::size_t>(&seq - sequences.data());
    for (std::size_t j = 0; j < preds.size(); ++j) {
      out.push_back(labels_to_depth(preds[j], options.labels));
      const LabelMap truth = make_labels(seq.frames[j].depth, options.labels);
      double se = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < truth.mask.size(); ++i) {
        if (!truth.mask[i]) continue;
        const double d = static_cast<double>(preds[j][i]) - truth.labels[i];
        se += d * d;
        ++n;
      }
      if (n) {
        l2[idx] += se / static_cast<double>(n);
        ++l2_n[idx];
      }
    }
    return out;
  };
  MetricReport r = evaluate_with("predicted", sequences, k, options, depths);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < l2.size(); ++i) {
    total += l2[i];
    count += l2_n[i];
  }
  r.depth_l2 = count ? total / static_cast<double>(count) : 0.0;
  return r;
}

MetricReport evaluate_oracle(const std::vector<SequenceRecord>& sequences, const CameraIntrinsics& k,
                             const EvalOptions& options) {
  auto depths = [](const SequenceRecord& seq) {
    std::vector<DepthMap> out;
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) out.push_back(seq.frames[j].depth);
    return out;
  };
  return evaluate_with("oracle", sequences, k, options, depths);
}

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const MetricReport& report) {
  std::ofstream j(json_path);
  if (!j) throw DataError("cannot write " + json_path.string());
  j << report.to_json().dump(2) << '\n';
  if (!csv_path.empty()) {
    std::ofstream c(csv_path);
    if (!c) throw DataError("cannot write " + csv_path.string());
    c << report.per_frame_csv();
  }
}

}  // namespace geowarp
