// Serial reference vs OpenMP kernels: conv2d forward/backward, forward warp
// and masked SSIM. Prints one row per kernel with the best-of-N wall time;
// warp and SSIM must agree exactly, conv within float round-off.

#include "geowarp/metrics.hpp"
#include "geowarp/nn/kernels.hpp"
#include "geowarp/synthesis.hpp"
#include "geowarp/synthetic.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

using namespace geowarp;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s %10.2f %10.2f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
              same ? "match" : "MISMATCH");
}

template <typename T>
double max_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

void bench_conv(int reps, int h, int w, int cin, int cout, int k, int stride) {
  const nn::ConvGeometry g = nn::conv_geometry({1, h, w, cin}, {k, k, cin, cout}, stride);
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  auto fill = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
  };
  const auto x = fill(std::size_t(h) * w * cin);
  const auto wt = fill(std::size_t(k) * k * cin * cout);
  const auto b = fill(std::size_t(cout));
  const std::size_t ny = std::size_t(g.out_h) * g.out_w * cout;
  const auto gy = fill(ny);
  std::vector<float> y_ref(ny), y_par(ny);
  const double fs = best_ms(reps, [&] { nn::reference::conv2d_forward(g, x.data(), wt.data(), b.data(), y_ref.data()); });
  const double fp = best_ms(reps, [&] { nn::parallel::conv2d_forward(g, x.data(), wt.data(), b.data(), y_par.data()); });
  char name[64];
  std::snprintf(name, sizeof name, "conv fwd %dx%dx%d->%d k%d s%d", h, w, cin, cout, k, stride);
  row(name, fs, fp, max_diff(y_ref, y_par) < 1e-3);

  std::vector<float> gx_r(x.size()), gw_r(wt.size()), gb_r(b.size());
  std::vector<float> gx_p(x.size()), gw_p(wt.size()), gb_p(b.size());
  auto zero = [](std::vector<float>& v) { std::fill(v.begin(), v.end(), 0.0f); };
  const double bs = best_ms(reps, [&] {
    zero(gx_r), zero(gw_r), zero(gb_r);
    nn::reference::conv2d_backward(g, x.data(), wt.data(), gy.data(), gx_r.data(), gw_r.data(), gb_r.data());
  });
  const double bp = best_ms(reps, [&] {
    zero(gx_p), zero(gw_p), zero(gb_p);
    nn::parallel::conv2d_backward(g, x.data(), wt.data(), gy.data(), gx_p.data(), gw_p.data(), gb_p.data());
  });
  std::snprintf(name, sizeof name, "conv bwd %dx%dx%d->%d k%d s%d", h, w, cin, cout, k, stride);
  row(name, bs, bp, max_diff(gx_r, gx_p) < 1e-2 && max_diff(gw_r, gw_p) < 1e-1);
}

void bench_warp(int reps, const CameraIntrinsics& k) {
  StreetSceneOptions o;
  o.intrinsics = k;
  o.frames = 2;
  const auto frames = render_synthetic_sequence(random_street_scene(o, 3));
  const RigidTransform m = pose_to_transform(frames[1].pose).inverse() * pose_to_transform(frames[0].pose);
  FramePrediction a, b;
  const double s = best_ms(reps, [&] { a = reference::warp_forward(frames[0].rgb, frames[0].depth, m, k); });
  const double p = best_ms(reps, [&] { b = parallel::warp_forward(frames[0].rgb, frames[0].depth, m, k); });
  char name[64];
  std::snprintf(name, sizeof name, "warp %dx%d", k.width, k.height);
  row(name, s, p, a.rgb == b.rgb && a.coverage == b.coverage && a.depth.values == b.depth.values);
}

void bench_ssim(int reps, int w, int h) {
  std::mt19937 rng(2);
  Image x(w, h), y(w, h);
  for (auto& v : x.pixels) v = static_cast<std::uint8_t>(rng());
  for (auto& v : y.pixels) v = static_cast<std::uint8_t>(rng());
  std::vector<std::uint8_t> mask(x.pixel_count());
  for (auto& v : mask) v = (rng() % 10) != 0;
  SsimResult a, b;
  const double s = best_ms(reps, [&] { a = reference::ssim_masked(x, y, mask); });
  const double p = best_ms(reps, [&] { b = parallel::ssim_masked(x, y, mask); });
  char name[64];
  std::snprintf(name, sizeof name, "ssim %dx%d", w, h);
  row(name, s, p, a.mean == b.mean && a.pixels == b.pixels);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs parallel kernel timings"};
  int reps = 5;
  app.add_option("--reps", reps, "Repetitions per kernel (best time is reported)")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  bench_conv(reps, 88, 288, 3, 32, 5, 2);
  bench_conv(reps, 44, 144, 32, 64, 3, 2);
  bench_conv(reps, 22, 72, 64, 256, 3, 1);
  bench_warp(reps, default_intrinsics());
  bench_ssim(reps, 288, 88);
  return 0;
}
