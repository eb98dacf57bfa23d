#include "geowarp/nn/ops.hpp"

#include "geowarp/nn/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace geowarp::nn {
namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

template <typename T>
void require_rank4(const char* op, const Shape& s) {
  if (s.size() != 4) throw std::invalid_argument(std::string(op) + ": expected NHWC tensor, got " + shape_str(s));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride);
  if (b.shape() != Shape{g.out_c}) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape()) + " for " + std::to_string(g.out_c) +
                                " output channels");
  }
  Tensor<T> y({g.batch, g.out_h, g.out_w, g.out_c});
  parallel::conv2d_forward(g, x.value().data(), w.value().data(), b.value().data(), y.data());
  const int xi = x.id, wi = w.id, bi = b.id;
  return x.tape->record(std::move(y), {xi, wi, bi}, [g, xi, wi, bi](Tape<T>& t, int self) {
    T* gx = t.requires_grad(xi) ? t.grad(xi).data() : nullptr;
    T* gw = t.requires_grad(wi) ? t.grad(wi).data() : nullptr;
    T* gb = t.requires_grad(bi) ? t.grad(bi).data() : nullptr;
    parallel::conv2d_backward(g, t.value(xi).data(), t.value(wi).data(), t.grad(self).data(), gx, gw, gb);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor<T> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<T>& t, int self) {
    const auto& gy = t.grad(self);
    for (int id : {ai, bi}) {
      if (!t.requires_grad(id)) continue;
      auto& g = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor<T> y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape<T>& t, int self) {
    const auto& gy = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& g = t.grad(ai);
      const auto& other = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
    }
    if (t.requires_grad(bi)) {
      auto& g = t.grad(bi);
      const auto& other = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> y = a.value();
  for (auto& v : y.values()) v *= factor;
  const int ai = a.id;
  return a.tape->record(std::move(y), {ai}, [ai, factor](Tape<T>& t, int self) {
    const auto& gy = t.grad(self);
    auto& g = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * factor;
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> y = x.value();
  for (auto& v : y.values()) v = stable_sigmoid(v);
  const int xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, int self) {
    const auto& gy = t.grad(self);
    const auto& s = t.value(self);
    auto& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * s[i] * (T(1) - s[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  Tensor<T> y = x.value();
  for (auto& v : y.values()) v = std::tanh(v);
  const int xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi](Tape<T>& t, int self) {
    const auto& gy = t.grad(self);
    const auto& s = t.value(self);
    auto& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * (T(1) - s[i] * s[i]);
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_rank4<T>("concat_channels", a.shape());
  require_rank4<T>("concat_channels", b.shape());
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[1] != sb[1] || sa[2] != sb[2]) {
    throw std::invalid_argument("concat_channels: spatial shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const int ca = sa[3], cb = sb[3];
  const std::size_t pixels = static_cast<std::size_t>(sa[0]) * sa[1] * sa[2];
  Tensor<T> y({sa[0], sa[1], sa[2], ca + cb});
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy(pa + p * ca, pa + (p + 1) * ca, y.data() + p * (ca + cb));
    std::copy(pb + p * cb, pb + (p + 1) * cb, y.data() + p * (ca + cb) + ca);
  }
  const int ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi, ca, cb, pixels](Tape<T>& t, int self) {
    const T* gy = t.grad(self).data();
    if (t.requires_grad(ai)) {
      T* g = t.grad(ai).data();
      for (std::size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < ca; ++c) g[p * ca + c] += gy[p * (ca + cb) + c];
    }
    if (t.requires_grad(bi)) {
      T* g = t.grad(bi).data();
      for (std::size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < cb; ++c) g[p * cb + c] += gy[p * (ca + cb) + ca + c];
    }
  });
}

template <typename T>
Var<T> slice_channels(Var<T> x, int begin, int count) {
  require_rank4<T>("slice_channels", x.shape());
  const Shape& s = x.shape();
  const int channels = s[3];
  if (begin < 0 || count <= 0 || begin + count > channels) {
    throw std::invalid_argument("slice_channels: range out of bounds for " + shape_str(s));
  }
  const std::size_t pixels = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  Tensor<T> y({s[0], s[1], s[2], count});
  const T* px = x.value().data();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy(px + p * channels + begin, px + p * channels + begin + count, y.data() + p * count);
  }
  const int xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi, begin, count, channels, pixels](Tape<T>& t, int self) {
    const T* gy = t.grad(self).data();
    T* g = t.grad(xi).data();
    for (std::size_t p = 0; p < pixels; ++p)
      for (int c = 0; c < count; ++c) g[p * channels + begin + c] += gy[p * count + c];
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  require_rank4<T>("layer_norm", x.shape());
  const Shape& s = x.shape();
  const int n = s[0], channels = s[3];
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw std::invalid_argument("layer_norm: gamma/beta must have " + std::to_string(channels) + " entries");
  }
  const std::size_t per_sample = static_cast<std::size_t>(s[1]) * s[2] * channels;
  Tensor<T> normed(s);
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  Tensor<T> y(s);
  const T* px = x.value().data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  for (int i = 0; i < n; ++i) {
    const T* xs = px + i * per_sample;
    // Two-pass statistics in double regardless of T.
    double mean = 0.0;
    for (std::size_t j = 0; j < per_sample; ++j) mean += xs[j];
    mean /= static_cast<double>(per_sample);
    double var = 0.0;
    for (std::size_t j = 0; j < per_sample; ++j) {
      const double d = xs[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(per_sample);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = static_cast<T>(is);
    T* ns = normed.data() + i * per_sample;
    T* ys = y.data() + i * per_sample;
    for (std::size_t j = 0; j < per_sample; ++j) {
      ns[j] = static_cast<T>((xs[j] - mean) * is);
      const std::size_t c = j % static_cast<std::size_t>(channels);
      ys[j] = ns[j] * pg[c] + pb[c];
    }
  }
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return x.tape->record(
      std::move(y), {xi, gi, bi},
      [xi, gi, bi, n, channels, per_sample, normed = std::move(normed), inv_std = std::move(inv_std)](Tape<T>& t,
                                                                                                      int self) {
        const T* gy = t.grad(self).data();
        const T* pg = t.value(gi).data();
        const T* ns_all = normed.data();
        if (t.requires_grad(gi) || t.requires_grad(bi)) {
          T* ggamma = t.requires_grad(gi) ? t.grad(gi).data() : nullptr;
          T* gbeta = t.requires_grad(bi) ? t.grad(bi).data() : nullptr;
          for (std::size_t j = 0; j < static_cast<std::size_t>(n) * per_sample; ++j) {
            const std::size_t c = j % static_cast<std::size_t>(channels);
            if (ggamma) ggamma[c] += gy[j] * ns_all[j];
            if (gbeta) gbeta[c] += gy[j];
          }
        }
        if (!t.requires_grad(xi)) return;
        T* gx = t.grad(xi).data();
        std::vector<T> gn(per_sample);
        for (int i = 0; i < n; ++i) {
          const T* gys = gy + i * per_sample;
          const T* ns = ns_all + i * per_sample;
          double mean_g = 0.0, mean_gn = 0.0;
          for (std::size_t j = 0; j < per_sample; ++j) {
            gn[j] = gys[j] * pg[j % static_cast<std::size_t>(channels)];
            mean_g += gn[j];
            mean_gn += static_cast<double>(gn[j]) * ns[j];
          }
          mean_g /= static_cast<double>(per_sample);
          mean_gn /= static_cast<double>(per_sample);
          const T is = inv_std[static_cast<std::size_t>(i)];
          T* gxs = gx + i * per_sample;
          for (std::size_t j = 0; j < per_sample; ++j) {
            gxs[j] += is * static_cast<T>(gn[j] - mean_g - ns[j] * mean_gn);
          }
        }
      });
}

template <typename T>
Tensor<T> depth_to_space_values(const Tensor<T>& x, int block) {
  require_rank4<T>("depth_to_space", x.shape());
  const Shape& s = x.shape();
  const int bb = block * block;
  if (block < 1 || s[3] % bb != 0) {
    throw std::invalid_argument("depth_to_space: " + std::to_string(s[3]) + " channels not divisible by " +
                                std::to_string(bb));
  }
  const int oc = s[3] / bb;
  Tensor<T> y({s[0], s[1] * block, s[2] * block, oc});
  for (int n = 0; n < s[0]; ++n)
    for (int oy = 0; oy < s[1] * block; ++oy)
      for (int ox = 0; ox < s[2] * block; ++ox)
        for (int c = 0; c < oc; ++c)
          y.at(n, oy, ox, c) = x.at(n, oy / block, ox / block, c * bb + (oy % block) * block + (ox % block));
  return y;
}

template <typename T>
Tensor<T> space_to_depth_values(const Tensor<T>& x, int block) {
  require_rank4<T>("space_to_depth", x.shape());
  const Shape& s = x.shape();
  if (block < 1 || s[1] % block != 0 || s[2] % block != 0) {
    throw std::invalid_argument("space_to_depth: spatial size not divisible by block");
  }
  const int bb = block * block;
  Tensor<T> y({s[0], s[1] / block, s[2] / block, s[3] * bb});
  for (int n = 0; n < s[0]; ++n)
    for (int iy = 0; iy < s[1]; ++iy)
      for (int ix = 0; ix < s[2]; ++ix)
        for (int c = 0; c < s[3]; ++c)
          y.at(n, iy / block, ix / block, c * bb + (iy % block) * block + (ix % block)) = x.at(n, iy, ix, c);
  return y;
}

template <typename T>
Var<T> depth_to_space(Var<T> x, int block) {
  Tensor<T> y = depth_to_space_values(x.value(), block);
  const int xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi, block](Tape<T>& t, int self) {
    const Tensor<T> back = space_to_depth_values(t.grad(self), block);
    auto& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

template <typename T>
Var<T> space_to_depth(Var<T> x, int block) {
  Tensor<T> y = space_to_depth_values(x.value(), block);
  const int xi = x.id;
  return x.tape->record(std::move(y), {xi}, [xi, block](Tape<T>& t, int self) {
    const Tensor<T> back = depth_to_space_values(t.grad(self), block);
    auto& g = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  const int xi = x.id;
  return x.tape->record(Tensor<T>({1}, total), {xi}, [xi](Tape<T>& t, int self) {
    const T gy = t.grad(self)[0];
    for (auto& g : t.grad(xi).values()) g += gy;
  });
}

#define GEOWARP_INSTANTIATE_OPS(T)                                                   \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int);                            \
  template Var<T> add<T>(Var<T>, Var<T>);                                            \
  template Var<T> mul<T>(Var<T>, Var<T>);                                            \
  template Var<T> scale<T>(Var<T>, T);                                               \
  template Var<T> sigmoid<T>(Var<T>);                                                \
  template Var<T> tanh<T>(Var<T>);                                                   \
  template Var<T> concat_channels<T>(Var<T>, Var<T>);                                \
  template Var<T> slice_channels<T>(Var<T>, int, int);                               \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, double);                     \
  template Var<T> depth_to_space<T>(Var<T>, int);                                    \
  template Var<T> space_to_depth<T>(Var<T>, int);                                    \
  template Var<T> sum<T>(Var<T>);                                                    \
  template Tensor<T> depth_to_space_values<T>(const Tensor<T>&, int);                \
  template Tensor<T> space_to_depth_values<T>(const Tensor<T>&, int);

GEOWARP_INSTANTIATE_OPS(float)
GEOWARP_INSTANTIATE_OPS(double)

}  // namespace geowarp::nn
