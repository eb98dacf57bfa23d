#pragma once

// Masked depth losses recorded on a tape. Prediction and label share a shape
// with one channel; mask holds one byte per element, nonzero = valid. Every
// loss is normalised by the number of valid pixels (or pixel pairs) and is 0
// with zero gradient when nothing is valid.

#include "geowarp/nn/tape.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace geowarp {

template <typename T>
nn::Var<T> l2_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask);

// Reverse Huber with c = max|delta| / 5 over valid pixels, held constant for
// differentiation.
template <typename T>
nn::Var<T> berhu_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask);

// Squared differences of horizontal and vertical neighbour gradients; a pair
// counts only when both pixels are valid.
template <typename T>
nn::Var<T> gdl_loss(nn::Var<T> pred, const nn::Tensor<T>& label, std::span<const std::uint8_t> mask);

enum class LossKind { kL2, kBerHu };

struct LossConfig {
  LossKind kind = LossKind::kL2;
  double lambda_gdl = 0.0;
  std::vector<double> alpha;  // per-frame weights; empty means all 1

  // Throws std::invalid_argument on negative or all-zero weights, or when
  // alpha is set and its length differs from frames.
  void validate(std::size_t frames) const;
};

// (1/k) * sum_i alpha_i * (base_i + lambda_gdl * gdl_i)
template <typename T>
nn::Var<T> sequence_loss(const std::vector<nn::Var<T>>& preds, const std::vector<nn::Tensor<T>>& labels,
                         const std::vector<std::vector<std::uint8_t>>& masks, const LossConfig& cfg);

}  // namespace geowarp
