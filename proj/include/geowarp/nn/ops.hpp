#pragma once

// Differentiable layer primitives recorded on a Tape. All image tensors are
// NHWC. Functions throw std::invalid_argument on shape mismatch.

#include "geowarp/nn/tape.hpp"
#include "geowarp/nn/tensor.hpp"

namespace geowarp::nn {

inline constexpr double kLayerNormEps = 1e-6;

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);

template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);

// Channel-wise concatenation / slicing of rank-4 tensors.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);
template <typename T>
Var<T> slice_channels(Var<T> x, int begin, int count);

// Per-sample statistics over H, W and C; gamma and beta have C entries.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = kLayerNormEps);

template <typename T>
Var<T> depth_to_space(Var<T> x, int block);
template <typename T>
Var<T> space_to_depth(Var<T> x, int block);

// Sum of every element, as a 1-element tensor.
template <typename T>
Var<T> sum(Var<T> x);

// Value-level rearrangements shared by the ops above and by tests.
template <typename T>
Tensor<T> depth_to_space_values(const Tensor<T>& x, int block);
template <typename T>
Tensor<T> space_to_depth_values(const Tensor<T>& x, int block);

}  // namespace geowarp::nn
