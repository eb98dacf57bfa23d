#include "geowarp/losses.hpp"

#include "geowarp/nn/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace geowarp {
namespace {

template <typename T>
void check(const char* op, nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask) {
  if (pred.shape() != label.shape() || mask.size() != label.size()) {
    throw std::invalid_argument(std::string(op) + ": prediction " + nn::shape_str(pred.shape()) + ", label " +
                                nn::shape_str(label.shape()) + ", mask of " + std::to_string(mask.size()));
  }
}

// Records a scalar loss whose gradient w.r.t. pred is precomputed.
template <typename T>
nn::Var<T> record_loss(nn::Var<T> pred, T value, std::vector<T> grad) {
  const int pi = pred.id;
  return pred.tape->record(nn::Tensor<T>({1}, value), {pi}, [pi, grad = std::move(grad)](nn::Tape<T>& t, int self) {
    const T gy = t.grad(self)[0];
    auto& g = t.grad(pi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * grad[i];
  });
}

}  // namespace

template <typename T>
nn::Var<T> l2_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask) {
  check("l2_loss", pred, label, mask);
  const auto& d = pred.value();
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  std::vector<T> grad(d.size(), T(0));
  double total = 0.0;
  if (n > 0) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!mask[i]) continue;
      const double delta = static_cast<double>(d[i]) - label[i];
      total += delta * delta;
      grad[i] = static_cast<T>(2.0 * delta / static_cast<double>(n));
    }
    total /= static_cast<double>(n);
  }
  return record_loss(pred, static_cast<T>(total), std::move(grad));
}

template <typename T>
nn::Var<T> berhu_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask) {
  check("berhu_loss", pred, label, mask);
  const auto& d = pred.value();
  std::size_t n = 0;
  double max_abs = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    max_abs = std::max(max_abs, std::abs(static_cast<double>(d[i]) - label[i]));
  }
  std::vector<T> grad(d.size(), T(0));
  double total = 0.0;
  const double c = max_abs / 5.0;
  if (n > 0 && c > 0.0) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!mask[i]) continue;
      const double delta = static_cast<double>(d[i]) - label[i];
      const double a = std::abs(delta);
      double g = 0.0;
      if (a <= c) {
        total += a;
        g = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
      } else {
        total += (delta * delta + c * c) / (2.0 * c);
        g = delta / c;
      }
      grad[i] = static_cast<T>(g / static_cast<double>(n));
    }
    total /= static_cast<double>(n);
  }
  return record_loss(pred, static_cast<T>(total), std::move(grad));
}

template <typename T>
nn::Var<T> gdl_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask) {
  check("gdl_loss", pred, label, mask);
  const auto& s = pred.shape();
  if (s.size() != 4 || s[3] != 1) throw std::invalid_argument("gdl_loss: expected a 1-channel NHWC map");
  const auto& d = pred.value();
  const int h = s[1], w = s[2];
  std::vector<double> g(d.size(), 0.0);
  double total = 0.0;
  std::size_t pairs = 0;
  auto pair = [&](std::size_t a, std::size_t b) {
    if (!mask[a] || !mask[b]) return;
    const double r = (static_cast<double>(d[a]) - d[b]) - (static_cast<double>(label[a]) - label[b]);
    total += r * r;
    g[a] += 2.0 * r;
    g[b] -= 2.0 * r;
    ++pairs;
  };
  for (int n = 0; n < s[0]; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = base + static_cast<std::size_t>(y) * w + x;
        if (x > 0) pair(i, i - 1);
        if (y > 0) pair(i, i - static_cast<std::size_t>(w));
      }
    }
  }
  std::vector<T> grad(d.size(), T(0));
  if (pairs > 0) {
    total /= static_cast<double>(pairs);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] = static_cast<T>(g[i] / static_cast<double>(pairs));
  }
  return record_loss(pred, static_cast<T>(total), std::move(grad));
}

void LossConfig::validate(std::size_t frames) const {
  if (lambda_gdl < 0.0 || !std::isfinite(lambda_gdl)) throw std::invalid_argument("lambda_gdl must be >= 0");
  if (alpha.empty()) return;
  if (alpha.size() != frames) {
    throw std::invalid_argument("alpha has " + std::to_string(alpha.size()) + " weights for " +
                                std::to_string(frames) + " frames");
  }
  bool any = false;
  for (double a : alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("alpha weights must be finite and >= 0");
    any = any || a > 0.0;
  }
  if (!any) throw std::invalid_argument("at least one alpha weight must be positive");
}

template <typename T>
nn::Var<T> sequence_loss(const std::vector<nn::Var<T>>& preds, const std::vector<nn::Tensor<T>>& labels,
                         const std::vector<std::vector<std::uint8_t>>& masks, const LossConfig& cfg) {
  const std::size_t k = preds.size();
  if (k == 0 || labels.size() != k || masks.size() != k) {
    throw std::invalid_argument("sequence_loss: need equal, non-zero counts of predictions, labels and masks");
  }
  cfg.validate(k);
  nn::Var<T> total;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = cfg.alpha.empty() ? 1.0 : cfg.alpha[i];
    nn::Var<T> frame = cfg.kind == LossKind::kL2 ? l2_loss(preds[i], labels[i], masks[i])
                                                 : berhu_loss(preds[i], labels[i], masks[i]);
    if (cfg.lambda_gdl != 0.0) {
      frame = nn::add(frame, nn::scale(gdl_loss(preds[i], labels[i], masks[i]), static_cast<T>(cfg.lambda_gdl)));
    }
    frame = nn::scale(frame, static_cast<T>(a / static_cast<double>(k)));
    total = total.valid() ? nn::add(total, frame) : frame;
  }
  return total;
}

#define GEOWARP_INSTANTIATE_LOSSES(T)                                                                            \
  template nn::Var<T> l2_loss<T>(nn::Var<T>, const nn::Tensor<T>&, std::span<const std::uint8_t>);               \
  template nn::Var<T> berhu_loss<T>(nn::Var<T>, const nn::Tensor<T>&, std::span<const std::uint8_t>);            \
  template nn::Var<T> gdl_loss<T>(nn::Var<T>, const nn::Tensor<T>&, std::span<const std::uint8_t>);              \
  template nn::Var<T> sequence_loss<T>(const std::vector<nn::Var<T>>&, const std::vector<nn::Tensor<T>>&,        \
                                       const std::vector<std::vector<std::uint8_t>>&, const LossConfig&);

GEOWARP_INSTANTIATE_LOSSES(float)
GEOWARP_INSTANTIATE_LOSSES(double)

}  // namespace geowarp
