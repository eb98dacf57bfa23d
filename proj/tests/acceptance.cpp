// Acceptance suite: one PASS/FAIL line per criterion with the measured
// values, its runtime and the runtime budget. Exits non-zero if any fails,
// unless --report-only is given.

#include "geowarp/losses.hpp"
#include "geowarp/metrics.hpp"
#include "geowarp/synthesis.hpp"
#include "geowarp/synthetic.hpp"
#include "geowarp/train.hpp"

#include "geometry_checks.hpp"
#include "metric_oracles.hpp"
#include "model_checks.hpp"
#include "op_checks.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

using namespace geowarp;
using namespace geowarp::testing;

namespace {

using Clock = std::chrono::steady_clock;
using Mask = std::vector<std::uint8_t>;

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = r.ok && secs < budget_s;
  if (!ok) ++failures;
  std::printf("%s  %-22s %s [%.1f s / %.0f s]\n", ok ? "PASS" : "FAIL", name, r.detail.c_str(), secs, budget_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Loss examples -----------------------------------------------------------

TensorD row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return TensorD({1, 1, n, 1}, std::move(v));
}

enum class Kind { kL2, kBerHu, kGdl };

double loss_value(Kind kind, const TensorD& pred, const TensorD& label, const Mask& mask) {
  TapeD tape;
  const VarD p = tape.leaf(pred);
  switch (kind) {
    case Kind::kL2: return l2_loss(p, label, mask).value()[0];
    case Kind::kBerHu: return berhu_loss(p, label, mask).value()[0];
    case Kind::kGdl: return gdl_loss(p, label, mask).value()[0];
  }
  return 0.0;
}

Outcome loss_vectors() {
  std::vector<std::pair<std::string, double>> errors;
  auto expect = [&](const std::string& name, double got, double want) {
    errors.emplace_back(name, std::abs(got - want));
  };
  const TensorD y4 = row({0.3, 0.5, 0.7, 0.2});
  expect("l2 zero", loss_value(Kind::kL2, y4, y4, Mask(4, 1)), 0.0);
  expect("l2 offset", loss_value(Kind::kL2, row({0.4, 0.6, 0.8, 0.3}), y4, Mask(4, 1)), 0.01);
  expect("l2 masked", loss_value(Kind::kL2, row({0.4, 9.0, 0.8, 0.3}), y4, Mask{1, 0, 1, 1}), 0.01);
  const TensorD z3 = row({0, 0, 0});
  expect("berhu c=0.2", loss_value(Kind::kBerHu, row({1.0, 0.1, 0.5}), z3, Mask(3, 1)), 1.1416666666666667);
  expect("berhu equal", loss_value(Kind::kBerHu, row({0.3, 0.3, -0.3}), z3, Mask(3, 1)), 0.78);
  expect("gdl step", loss_value(Kind::kGdl, row({0, 1}), row({0, 0}), Mask(2, 1)), 1.0);
  expect("gdl masked pair", loss_value(Kind::kGdl, row({0, 1, 5}), z3, Mask{1, 1, 0}), 1.0);
  const TensorD p({1, 2, 2, 1}, std::vector<double>{0, 2, 1, 7});
  expect("gdl 2x2", loss_value(Kind::kGdl, p, TensorD({1, 2, 2, 1}), Mask{1, 1, 1, 0}), 2.5);

  double worst = 0;
  std::string worst_name;
  for (const auto& [name, e] : errors)
    if (e >= worst) worst = e, worst_name = name;

  // Continuity at |delta| = c with c = 1 set by the 5.0 residual.
  const TensorD y2 = row({0, 0});
  const double at = loss_value(Kind::kBerHu, row({5.0, 1.0}), y2, Mask(2, 1));
  const double jump = std::max(std::abs(loss_value(Kind::kBerHu, row({5.0, 1.0 - 1e-9}), y2, Mask(2, 1)) - at),
                               std::abs(loss_value(Kind::kBerHu, row({5.0, 1.0 + 1e-9}), y2, Mask(2, 1)) - at));
  const double h = 1e-7;
  const double left = (at - loss_value(Kind::kBerHu, row({5.0, 1.0 - h}), y2, Mask(2, 1))) / h;
  const double right = (loss_value(Kind::kBerHu, row({5.0, 1.0 + h}), y2, Mask(2, 1)) - at) / h;
  const double slope = std::abs(left - right);
  return {worst <= 1e-9 && jump <= 1e-6 && slope <= 1e-6,
          fmt("worst vector error %.2e (%s), value jump %.2e, slope jump %.2e", worst, worst_name.c_str(), jump,
              slope)};
}

// Synthesis -----------------------------------------------------------------

Outcome identity_warp() {
  StreetSceneOptions o;
  o.intrinsics = default_intrinsics();
  o.frames = 10;
  std::vector<Frame> frames;
  for (std::uint64_t seed : {41, 42}) {
    auto f = render_synthetic_sequence(random_street_scene(o, seed));
    frames.insert(frames.end(), f.begin(), f.end());
  }
  int exact = 0;
  for (const Frame& f : frames) {
    const FramePrediction p = warp_forward(f.rgb, f.depth, EgoMotion{}, o.intrinsics);
    bool same = p.depth.mask == f.depth.mask && p.coverage == f.depth.mask;
    for (std::size_t i = 0; same && i < f.depth.size(); ++i) {
      if (!f.depth.mask[i]) continue;
      same = p.depth.values[i] == f.depth.values[i];
      for (int c = 0; c < 3; ++c) same = same && p.rgb.pixels[i * 3 + c] == f.rgb.pixels[i * 3 + c];
    }
    exact += same;
  }
  return {exact == static_cast<int>(frames.size()), fmt("%d/%zu frames bit-exact", exact, frames.size())};
}

Outcome warp_oracle() {
  const CameraIntrinsics k = default_intrinsics();
  int passed = 0;
  double min_psnr = std::numeric_limits<double>::infinity(), min_ssim = 1.0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto frames = render_synthetic_sequence(two_box_scene(seed, k, 2));
    const RigidTransform m = ego_motion(frames[0].pose, frames[1].pose).to_transform();
    const FramePrediction p = warp_forward(frames[0].rgb, frames[0].depth, m, k);
    Mask mask = visible_in_source(frames[0].depth, frames[1].depth, m, k);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && p.coverage[i];
    const double ps = psnr(p.rgb, frames[1].rgb, mask);
    const double ss = ssim(p.rgb, frames[1].rgb, mask);
    min_psnr = std::min(min_psnr, ps);
    min_ssim = std::min(min_ssim, ss);
    passed += ps > 30.0 && ss > 0.95;
  }
  return {passed == 10, fmt("%d/10 sequences, min PSNR %.2f dB, min SSIM %.4f", passed, min_psnr, min_ssim)};
}

// Metrics ---------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(7);
  Image a(64, 24), b(64, 24);
  for (auto& v : a.pixels) v = static_cast<std::uint8_t>(20 + rng() % 200);
  for (std::size_t i = 0; i < b.pixels.size(); ++i) b.pixels[i] = static_cast<std::uint8_t>(a.pixels[i] + (i % 2 ? 1 : -1));
  const Mask all(a.pixel_count(), 1);
  const double p1 = psnr(a, b, all);
  const double self = ssim(a, a, all);
  Image c = a;
  for (auto& v : c.pixels) v = static_cast<std::uint8_t>(std::clamp<int>(v + static_cast<int>(rng() % 61) - 30, 0, 255));
  Mask partial(a.pixel_count());
  for (auto& v : partial) v = rng() % 5 != 0;
  const double asym = std::abs(ssim(a, c, partial) - ssim(c, a, partial));
  const double oracle_gap = std::abs(ssim(a, c, partial) - oracle_ssim(a, c, partial));
  return {std::abs(p1 - 48.1308) <= 1e-3 && self == 1.0 && asym <= 1e-12 && oracle_gap <= 1e-9,
          fmt("PSNR(MSE=1) %.4f dB, SSIM(x,x) %.17g, asymmetry %.1e, oracle gap %.1e", p1, self, asym,
              oracle_gap)};
}

// Training and evaluation -------------------------------------------------------

std::vector<SequenceRecord> street_sequences(int count, std::uint64_t first_seed, const CameraIntrinsics& k) {
  StreetSceneOptions o;
  o.intrinsics = k;
  o.frames = 10;
  std::vector<SequenceRecord> out;
  for (int i = 0; i < count; ++i) out.push_back({render_synthetic_sequence(random_street_scene(o, first_seed + i))});
  return out;
}

struct Trained {
  nn::ParamSet<float> params;
  std::vector<StepLog> steps;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  int steps = 400;
  bool report_only = false;
  app.add_option("--steps", steps, "Training steps for the smoke run (at most 3000)")->check(CLI::Range(1, 3000));
  app.add_flag("--report-only", report_only, "Exit 0 when criteria fail; crashes still exit non-zero");
  CLI11_PARSE(app, argc, argv);

  criterion("shape ledger", 10, [] {
    const auto bad = shape_mismatches(trace_shapes(ArchitectureConfig::full()));
    std::string detail = fmt("%zu rows checked, %zu mismatches", table_one().size(), bad.size());
    for (const auto& b : bad) detail += "; " + b;
    return Outcome{bad.empty(), detail};
  });

  criterion("gradient suite", 300, [] {
    double worst_op = 0;
    std::string worst_name;
    std::size_t checked = 0;
    for (const auto& c : op_gradient_suite()) {
      checked += c.result.checked;
      if (c.result.max_rel >= worst_op) worst_op = c.result.max_rel, worst_name = c.op;
    }
    const GradCheck e2e = model_gradient_check(8, 16, 50, 12);
    return Outcome{worst_op <= 1e-4 && e2e.checked == 50 && e2e.max_rel <= 1e-3,
                   fmt("per-op max rel %.2e (%s, %zu entries), end-to-end max rel %.2e (%zu params)", worst_op,
                       worst_name.c_str(), checked, e2e.max_rel, e2e.checked)};
  });

  criterion("geometry round trip", 30, [] {
    const RoundTrip rt = projection_round_trip(100, 21);
    const OracleAgreement oa = ego_motion_oracle(1000, 11);
    return Outcome{rt.counts_match && rt.exact_pixels && rt.depth_error <= 1e-9 && oa.motion_error <= 1e-9,
                   fmt("100 maps depth err %.2e, pixels %s; 1000 pairs ego-motion err %.2e", rt.depth_error,
                       rt.exact_pixels && rt.counts_match ? "exact" : "WRONG", oa.motion_error)};
  });

  criterion("identity warp", 10, identity_warp);
  criterion("warp oracle", 120, warp_oracle);
  criterion("loss vectors", 10, loss_vectors);
  criterion("metric oracles", 5, metric_oracles);

  // Desk-scale training shared by the last three criteria.
  const CameraIntrinsics desk = desk_intrinsics();
  const ArchitectureConfig config = ArchitectureConfig::reduced();
  const auto train_set = make_examples(street_sequences(50, 1000, desk), {});
  const auto eval_records = street_sequences(10, 5000, desk);
  const auto eval_set = make_examples(eval_records, {});
  TrainOptions options;
  options.steps = steps;
  options.batch = 8;
  options.lr = 1e-4;
  Trained model;

  criterion("training smoke", 1800, [&] {
    const double initial = evaluate_loss(init_params<float>(config, options.seed), config, eval_set, {});
    TrainResult r = train(train_set, config, {}, options);
    const double final_loss = evaluate_loss(r.params, config, eval_set, {});
    TrainOptions again = options;
    again.steps = 20;
    const TrainResult repeat = train(train_set, config, {}, again);
    bool same = true;
    for (int i = 0; i < again.steps; ++i) same = same && repeat.steps[i].loss == r.steps[i].loss;
    model = {std::move(r.params), std::move(r.steps)};
    return Outcome{final_loss < 0.2 * initial && same,
                   fmt("%d steps, eval L2 %.5f -> %.5f (ratio %.3f), first 20 losses %s on rerun", steps, initial,
                       final_loss, final_loss / initial, same ? "identical" : "DIFFER")};
  });

  MetricReport predicted, oracle;
  criterion("more frames help", 300, [&] {
    predicted = evaluate_model(model.params, config, eval_records, desk);
    const auto at = [&](int index) {
      for (const auto& f : predicted.per_frame)
        if (f.frame_index == index) return f;
      throw std::runtime_error("missing frame index " + std::to_string(index));
    };
    const auto i1 = at(1), i2 = at(2), i5 = at(5);
    return Outcome{i2.ssim_mean > i1.ssim_mean && i2.psnr_mean > i1.psnr_mean && i5.ssim_mean >= i2.ssim_mean,
                   fmt("SSIM idx1 %.4f idx2 %.4f idx5 %.4f; PSNR idx1 %.2f idx2 %.2f dB", i1.ssim_mean,
                       i2.ssim_mean, i5.ssim_mean, i1.psnr_mean, i2.psnr_mean)};
  });

  criterion("oracle tracking", 300, [&] {
    oracle = evaluate_oracle(eval_records, desk);
    if (oracle.per_frame.size() != predicted.per_frame.size()) return Outcome{false, "frame index mismatch"};
    double gap = 0;
    for (std::size_t i = 0; i < oracle.per_frame.size(); ++i)
      gap += std::abs(predicted.per_frame[i].psnr_mean - oracle.per_frame[i].psnr_mean);
    gap /= static_cast<double>(oracle.per_frame.size());
    return Outcome{gap < 3.0, fmt("mean |PSNR gap| %.2f dB over %zu indices (predicted %.2f, oracle %.2f dB)", gap,
                                  oracle.per_frame.size(), predicted.psnr, oracle.psnr)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 || report_only ? 0 : 1;
}
