#include "geowarp/errors.hpp"
#include "geowarp/metrics.hpp"

#include "metric_oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace geowarp;
using namespace geowarp::testing;

namespace {

using Mask = std::vector<std::uint8_t>;

Image noise_image(int w, int h, std::mt19937_64& rng, int lo = 0, int hi = 255) {
  Image im(w, h);
  std::uniform_int_distribution<int> d(lo, hi);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(d(rng));
  return im;
}

Mask random_mask(std::size_t n, std::mt19937_64& rng, double keep) {
  Mask m(n);
  std::bernoulli_distribution b(keep);
  for (auto& v : m) v = b(rng);
  return m;
}

}  // namespace

TEST_CASE("psnr examples") {
  std::mt19937_64 rng(1);
  const Image a = noise_image(16, 12, rng);
  const Mask all(a.pixel_count(), 1);
  CHECK(std::isinf(psnr(a, a, all)));
  CHECK(psnr(a, a, all) > 0);

  Image black(16, 12, 3, 0), white(16, 12, 3, 255);
  CHECK(psnr(black, white, all) == 0.0);

  Image one(16, 12, 3, 1);
  // Every other sample off by one: MSE 0.5.
  Image off = black;
  for (std::size_t i = 0; i < off.pixels.size(); i += 2) off.pixels[i] = 1;
  CHECK(std::abs(psnr(black, one, all) - 48.1308) <= 1e-3);
  CHECK(std::abs(psnr(black, off, all) - (48.1308 + 10 * std::log10(2.0))) <= 1e-3);

  // Only masked pixels count.
  Image partly = black;
  Mask left(a.pixel_count(), 0);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      if (x < 8) left[static_cast<std::size_t>(y * 16 + x)] = 1;
      else partly.at(x, y)[0] = 200;
    }
  CHECK(std::isinf(psnr(black, partly, left)));

  CHECK_THROWS_AS(psnr(a, a, Mask(a.pixel_count(), 0)), std::invalid_argument);
  CHECK_THROWS_AS(psnr(a, Image(4, 4), all), std::invalid_argument);
  CHECK_THROWS_AS(psnr(a, a, Mask(3, 1)), std::invalid_argument);
}

TEST_CASE("psnr matches the oracle and decreases with MSE") {
  std::mt19937_64 rng(2);
  const Image gt = noise_image(20, 10, rng);
  const Mask m = random_mask(gt.pixel_count(), rng, 0.6);
  double last = INFINITY;
  for (int amp : {1, 3, 8, 20, 60}) {
    Image p = gt;
    std::uniform_int_distribution<int> d(-amp, amp);
    for (auto& v : p.pixels) v = static_cast<std::uint8_t>(std::clamp(int(v) + d(rng), 0, 255));
    const double got = psnr(p, gt, m);
    CHECK(std::abs(got - oracle_psnr(p, gt, m)) <= 1e-9);
    CHECK(got < last);
    last = got;
  }
}

TEST_CASE("ssim examples") {
  std::mt19937_64 rng(3);
  const Image gray = noise_image(32, 24, rng, 96, 160);
  const Mask all(gray.pixel_count(), 1);
  CHECK(ssim(gray, gray, all) == 1.0);

  Image inverted = gray;
  for (auto& v : inverted.pixels) v = static_cast<std::uint8_t>(255 - v);
  const double inv = ssim(inverted, gray, all);
  CHECK(inv < 0.0);
  CHECK(std::abs(inv - oracle_ssim(inverted, gray, all)) <= 1e-9);

  const Image a(32, 24, 3, 100), b(32, 24, 3, 120);
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double expected = (2.0 * 100 * 120 + c1) / (100.0 * 100 + 120.0 * 120 + c1);
  CHECK(std::abs(ssim(a, b, all) - expected) <= 1e-12);

  CHECK_THROWS_AS(ssim(a, b, Mask(a.pixel_count(), 0)), std::invalid_argument);
  CHECK_THROWS_AS(ssim(a, Image(3, 3), all), std::invalid_argument);
  SsimOptions even;
  even.window = 10;
  CHECK_THROWS_AS(ssim(a, b, all, even), std::invalid_argument);
}

TEST_CASE("ssim agrees with the scalar oracle under masks") {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 10; ++n) {
    const Image gt = noise_image(30, 20, rng);
    Image pred = gt;
    std::uniform_int_distribution<int> d(-40, 40);
    for (auto& v : pred.pixels) v = static_cast<std::uint8_t>(std::clamp(int(v) + d(rng), 0, 255));
    const Mask m = random_mask(gt.pixel_count(), rng, 0.55 + 0.04 * n);
    const SsimResult r = ssim_masked(pred, gt, m);
    REQUIRE(r.pixels > 0);
    CHECK(std::abs(r.mean - oracle_ssim(pred, gt, m)) <= 1e-9);
    CHECK(r.mean <= 1.0);
    const auto map = ssim_map(pred, gt, m);
    std::size_t evaluated = 0;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 30; ++x) {
        const double want = oracle_ssim_at(pred, gt, m, x, y);
        const double got = map[static_cast<std::size_t>(y * 30 + x)];
        CHECK(std::isnan(want) == std::isnan(got));
        if (!std::isnan(want)) {
          ++evaluated;
          CHECK(std::abs(got - want) <= 1e-9);
        }
      }
    CHECK(evaluated == r.pixels);
  }
}

TEST_CASE("ssim is symmetric") {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 10; ++n) {
    const Image a = noise_image(24, 18, rng), b = noise_image(24, 18, rng);
    const Mask m = random_mask(a.pixel_count(), rng, 0.8);
    CHECK(std::abs(ssim(a, b, m) - ssim(b, a, m)) <= 1e-12);
  }
}

TEST_CASE("parallel ssim matches the serial reference") {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 5; ++n) {
    const Image a = noise_image(64, 40, rng), b = noise_image(64, 40, rng);
    const Mask m = random_mask(a.pixel_count(), rng, 0.7);
    const auto r = reference::ssim_masked(a, b, m);
    const auto p = parallel::ssim_masked(a, b, m);
    CHECK(r.mean == p.mean);
    CHECK(r.pixels == p.pixels);
  }
}

TEST_CASE("shrinking the mask away from a window leaves its SSIM unchanged") {
  std::mt19937_64 rng(7);
  const Image a = noise_image(40, 30, rng), b = noise_image(40, 30, rng);
  const Mask full = random_mask(a.pixel_count(), rng, 0.9);
  Mask shrunk = full;
  // Drop the right half; centres at x <= 13 have windows entirely in x < 19.
  for (int y = 0; y < 30; ++y)
    for (int x = 20; x < 40; ++x) shrunk[static_cast<std::size_t>(y * 40 + x)] = 0;
  const auto before = ssim_map(a, b, full);
  const auto after = ssim_map(a, b, shrunk);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x <= 13; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * 40 + x);
      CHECK(std::isnan(before[i]) == std::isnan(after[i]));
      if (!std::isnan(before[i])) CHECK(before[i] == after[i]);
    }
  for (int y = 0; y < 30; ++y)
    for (int x = 20; x < 40; ++x) CHECK(std::isnan(after[static_cast<std::size_t>(y * 40 + x)]));
}

TEST_CASE("metric values serialise infinity as a string") {
  CHECK(metric_to_json(INFINITY) == "inf");
  CHECK(std::isinf(metric_from_json("inf")));
  CHECK(metric_from_json(metric_to_json(31.25)) == 31.25);
  CHECK(metric_to_string(INFINITY) == "inf");
  CHECK_THROWS_AS(metric_from_json("nope"), DataError);
}

TEST_CASE("oracle evaluation on static scenes is perfect") {
  const CameraIntrinsics k = desk_intrinsics();
  const auto frames = render_synthetic_sequence(plane_scene(10.0, k, {0, 0, 0, 0, 0}));
  std::vector<SequenceRecord> seqs{{frames}, {frames}};
  const MetricReport r = evaluate_oracle(seqs, k);
  CHECK(r.mode == "oracle");
  CHECK(std::isinf(r.psnr));
  CHECK(r.ssim == 1.0);
  REQUIRE(r.per_frame.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.per_frame[i].frame_index == static_cast<int>(i + 1));
    CHECK(r.per_frame[i].n == 2);
    CHECK(std::isinf(r.per_frame[i].psnr_mean));
    CHECK(r.per_frame[i].ssim_mean == 1.0);
  }
  CHECK(r.predictions == 8);
  CHECK(r.pixels > 0);
  CHECK_THROWS_AS(evaluate_oracle({SequenceRecord{{frames[0]}}}, k), std::invalid_argument);
}

TEST_CASE("evaluation is deterministic and reports round trip") {
  const CameraIntrinsics k = desk_intrinsics();
  std::vector<SequenceRecord> seqs;
  for (std::uint64_t s = 0; s < 3; ++s) seqs.push_back({render_synthetic_sequence(two_box_scene(40 + s, k, 4))});
  const MetricReport a = evaluate_oracle(seqs, k);
  const MetricReport b = evaluate_oracle(seqs, k);
  CHECK(a.to_json() == b.to_json());
  CHECK(std::isfinite(a.psnr));
  CHECK(a.ssim < 1.0);

  const ArchitectureConfig config = ArchitectureConfig::reduced();
  const auto params = init_params<float>(config, 3);
  const MetricReport m1 = evaluate_model(params, config, seqs, k);
  const MetricReport m2 = evaluate_model(params, config, seqs, k);
  CHECK(m1.mode == "predicted");
  CHECK(m1.to_json() == m2.to_json());
  CHECK(m1.depth_l2 > 0.0);
  CHECK(m1.per_frame.size() == 3);

  const MetricReport back = MetricReport::from_json(m1.to_json());
  CHECK(back.to_json() == m1.to_json());
  CHECK_THROWS_AS(MetricReport::from_json(nlohmann::json{{"mode", 3}}), DataError);

  const auto dir = scratch_dir("metrics");
  write_report(dir / "r.json", dir / "r.csv", m1);
  std::ifstream js(dir / "r.json");
  CHECK(MetricReport::from_json(nlohmann::json::parse(js)).to_json() == m1.to_json());
  std::ifstream csv(dir / "r.csv");
  std::stringstream text;
  text << csv.rdbuf();
  CHECK(text.str() == m1.per_frame_csv());
  std::string header;
  std::getline(text, header);
  CHECK(header == "frame_index,psnr_mean,ssim_mean,n");
  int rows = 0;
  for (std::string line; std::getline(text, line);) ++rows;
  CHECK(rows == 3);
}
