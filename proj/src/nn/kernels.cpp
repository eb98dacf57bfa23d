#include "geowarp/nn/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace geowarp::nn {
namespace {

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, 1.0, a, lda, b, ldb, beta, c, ldc);
}

// cols is (out_h * out_w) x (k_h * k_w * in_c) for one image.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int kcols = g.k_h * g.k_w * g.in_c;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      T* row = cols + (static_cast<std::size_t>(oy) * g.out_w + ox) * kcols;
      for (int kh = 0; kh < g.k_h; ++kh) {
        const int iy = oy * g.stride + kh - g.pad_top;
        for (int kw = 0; kw < g.k_w; ++kw) {
          const int ix = ox * g.stride + kw - g.pad_left;
          T* dst = row + (kh * g.k_w + kw) * g.in_c;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + g.in_c, T(0));
          } else {
            const T* src = x + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
            std::copy(src, src + g.in_c, dst);
          }
        }
      }
    }
  }
}

// Gather form of col2im: each input pixel sums the columns that read it, so
// rows can be split across threads without write conflicts.
template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* cols, T* gx) {
  const int kcols = g.k_h * g.k_w * g.in_c;
#pragma omp parallel for schedule(static)
  for (int iy = 0; iy < g.in_h; ++iy) {
    for (int ix = 0; ix < g.in_w; ++ix) {
      T* dst = gx + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
      for (int kh = 0; kh < g.k_h; ++kh) {
        const int ny = iy + g.pad_top - kh;
        if (ny < 0 || ny % g.stride != 0) continue;
        const int oy = ny / g.stride;
        if (oy >= g.out_h) continue;
        for (int kw = 0; kw < g.k_w; ++kw) {
          const int nx = ix + g.pad_left - kw;
          if (nx < 0 || nx % g.stride != 0) continue;
          const int ox = nx / g.stride;
          if (ox >= g.out_w) continue;
          const T* src = cols + (static_cast<std::size_t>(oy) * g.out_w + ox) * kcols + (kh * g.k_w + kw) * g.in_c;
          for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

ConvGeometry conv_geometry(const Shape& x, const Shape& w, int stride) {
  if (x.size() != 4 || w.size() != 4) throw std::invalid_argument("conv2d: expected rank-4 input and kernel");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  if (x[3] != w[2]) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x[3]) + " channels, kernel expects " +
                                std::to_string(w[2]));
  }
  ConvGeometry g;
  g.batch = x[0];
  g.in_h = x[1];
  g.in_w = x[2];
  g.in_c = x[3];
  g.k_h = w[0];
  g.k_w = w[1];
  g.out_c = w[3];
  g.stride = stride;
  g.out_h = (g.in_h + stride - 1) / stride;
  g.out_w = (g.in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + g.k_h - g.in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + g.k_w - g.in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  for (int n = 0; n < g.batch; ++n) {
    const T* xn = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c;
    T* yn = y + static_cast<std::size_t>(n) * g.out_h * g.out_w * g.out_c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        for (int co = 0; co < g.out_c; ++co) {
          T sum = b ? b[co] : T(0);
          for (int kh = 0; kh < g.k_h; ++kh) {
            const int iy = oy * g.stride + kh - g.pad_top;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kw = 0; kw < g.k_w; ++kw) {
              const int ix = ox * g.stride + kw - g.pad_left;
              if (ix < 0 || ix >= g.in_w) continue;
              for (int ci = 0; ci < g.in_c; ++ci) {
                sum += xn[(static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c + ci] *
                       w[((static_cast<std::size_t>(kh) * g.k_w + kw) * g.in_c + ci) * g.out_c + co];
              }
            }
          }
          yn[(static_cast<std::size_t>(oy) * g.out_w + ox) * g.out_c + co] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  for (int n = 0; n < g.batch; ++n) {
    const T* xn = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c;
    T* gxn = gx ? gx + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c : nullptr;
    const T* gyn = gy + static_cast<std::size_t>(n) * g.out_h * g.out_w * g.out_c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        for (int co = 0; co < g.out_c; ++co) {
          const T go = gyn[(static_cast<std::size_t>(oy) * g.out_w + ox) * g.out_c + co];
          if (gb) gb[co] += go;
          for (int kh = 0; kh < g.k_h; ++kh) {
            const int iy = oy * g.stride + kh - g.pad_top;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kw = 0; kw < g.k_w; ++kw) {
              const int ix = ox * g.stride + kw - g.pad_left;
              if (ix < 0 || ix >= g.in_w) continue;
              for (int ci = 0; ci < g.in_c; ++ci) {
                const std::size_t xi = (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c + ci;
                const std::size_t wi = ((static_cast<std::size_t>(kh) * g.k_w + kw) * g.in_c + ci) * g.out_c + co;
                if (gxn) gxn[xi] += w[wi] * go;
                if (gw) gw[wi] += xn[xi] * go;
              }
            }
          }
        }
      }
    }
  }
}

template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, const float*, const float*, const float*, float*, float*,
                                     float*);
template void conv2d_backward<double>(const ConvGeometry&, const double*, const double*, const double*, double*,
                                      double*, double*);

}  // namespace reference

namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const int pixels = g.out_h * g.out_w;
  const int kcols = g.k_h * g.k_w * g.in_c;
  std::vector<T> cols(static_cast<std::size_t>(pixels) * kcols);
  for (int n = 0; n < g.batch; ++n) {
    const T* xn = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c;
    T* yn = y + static_cast<std::size_t>(n) * pixels * g.out_c;
    im2col(g, xn, cols.data());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < pixels; ++p) {
      T* row = yn + static_cast<std::size_t>(p) * g.out_c;
      if (b) {
        std::copy(b, b + g.out_c, row);
      } else {
        std::fill(row, row + g.out_c, T(0));
      }
    }
    gemm(CblasNoTrans, CblasNoTrans, pixels, g.out_c, kcols, cols.data(), kcols, w, g.out_c, T(1), yn, g.out_c);
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  const int pixels = g.out_h * g.out_w;
  const int kcols = g.k_h * g.k_w * g.in_c;
  std::vector<T> cols(static_cast<std::size_t>(pixels) * kcols);
  for (int n = 0; n < g.batch; ++n) {
    const T* xn = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c;
    const T* gyn = gy + static_cast<std::size_t>(n) * pixels * g.out_c;
    if (gb) {
      for (int p = 0; p < pixels; ++p) {
        const T* row = gyn + static_cast<std::size_t>(p) * g.out_c;
        for (int c = 0; c < g.out_c; ++c) gb[c] += row[c];
      }
    }
    if (gw) {
      im2col(g, xn, cols.data());
      gemm(CblasTrans, CblasNoTrans, kcols, g.out_c, pixels, cols.data(), kcols, gyn, g.out_c, T(1), gw, g.out_c);
    }
    if (gx) {
      gemm(CblasNoTrans, CblasTrans, pixels, kcols, g.out_c, gyn, g.out_c, w, g.out_c, T(0), cols.data(), kcols);
      col2im_accumulate(g, cols.data(), gx + static_cast<std::size_t>(n) * g.in_h * g.in_w * g.in_c);
    }
  }
}

template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, const float*, const float*, const float*, float*, float*,
                                     float*);
template void conv2d_backward<double>(const ConvGeometry&, const double*, const double*, const double*, double*,
                                      double*, double*);

}  // namespace parallel
}  // namespace geowarp::nn
