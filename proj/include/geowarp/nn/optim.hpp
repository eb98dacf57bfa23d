#pragma once

#include "geowarp/nn/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace geowarp::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  Tensor<T> m;
  Tensor<T> v;
};

// One Adam update of a single tensor at step t (1-based). Moments are
// allocated on first use.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamMoments<T>& moments, long t, const AdamConfig& cfg) {
  if (t < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  if (grad.shape() != param.shape()) {
    throw std::invalid_argument("adam_step: gradient shape " + shape_str(grad.shape()) + " for parameter " +
                                shape_str(param.shape()));
  }
  if (moments.m.empty()) moments.m = Tensor<T>(param.shape());
  if (moments.v.empty()) moments.v = Tensor<T>(param.shape());
  if (moments.m.shape() != param.shape() || moments.v.shape() != param.shape()) {
    throw std::invalid_argument("adam_step: moment shape mismatch");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    moments.m[i] = static_cast<T>(m);
    moments.v[i] = static_cast<T>(v);
    param[i] = static_cast<T>(param[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
  }
}

template <typename T>
double global_norm(const std::vector<Tensor<T>>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g.values()) sq += static_cast<double>(v) * v;
  return std::sqrt(sq);
}

// Rescales grads in place when their global norm exceeds max_norm. Returns
// the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (auto& v : g.values()) v *= factor;
  }
  return norm;
}

}  // namespace geowarp::nn
