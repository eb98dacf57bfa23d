#pragma once

// Convolution kernels. `reference` is the plain serial loop nest kept as the
// oracle for tests and benchmarks; `parallel` lowers to im2col + BLAS GEMM
// with OpenMP over output rows and is what the network uses.
//
// Layouts: x is N x H x W x Cin, w is KH x KW x Cin x Cout, y is
// N x OH x OW x Cout. Padding is SAME with zeros (TensorFlow convention:
// output = ceil(input / stride), extra padding goes after).

#include "geowarp/nn/tensor.hpp"

namespace geowarp::nn {

struct ConvGeometry {
  int batch = 1;
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  int k_h = 0, k_w = 0;
  int stride = 1;
  int pad_top = 0, pad_left = 0;
};

// Throws std::invalid_argument on rank or channel mismatch.
ConvGeometry conv_geometry(const Shape& x, const Shape& w, int stride);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y);

// Accumulates into gx, gw, gb; any of them may be null to skip that gradient.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb);

}  // namespace reference

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb);

}  // namespace parallel

}  // namespace geowarp::nn
