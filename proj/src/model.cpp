#include "geowarp/model.hpp"

#include <random>
#include <stdexcept>

namespace geowarp {
namespace {

using nn::Shape;
using nn::Tensor;
using nn::Var;

std::string idx(const char* prefix, int i) { return prefix + std::to_string(i); }

int dim_of(const nn::ParamSet<float>& p, const std::string& name, int d) {
  if (!p.contains(name)) throw std::invalid_argument("checkpoint lacks parameter " + name);
  const auto& t = p.get(name);
  if (t.rank() != 4) throw std::invalid_argument("parameter " + name + " is not a rank-4 kernel");
  return t.dim(d);
}

Shape hwc(const Shape& nhwc) { return {nhwc[1], nhwc[2], nhwc[3]}; }

}  // namespace

ArchitectureConfig ArchitectureConfig::full() { return {}; }

ArchitectureConfig ArchitectureConfig::reduced() {
  ArchitectureConfig c;
  c.height = 24;
  c.width = 72;
  c.channels = {8, 16, 32, 16, 8};
  return c;
}

ArchitectureConfig ArchitectureConfig::from_params(const nn::ParamSet<float>& params, int height, int width) {
  ArchitectureConfig c;
  c.height = height;
  c.width = width;
  c.input_channels = dim_of(params, "conv1/w", 2);
  for (int i = 0; i < 5; ++i) c.channels[static_cast<std::size_t>(i)] = dim_of(params, idx("conv", i + 1) + "/w", 3);
  for (int i = 0; i < 6; ++i) c.conv_kernels[static_cast<std::size_t>(i)] = dim_of(params, idx("conv", i + 1) + "/w", 0);
  c.lstm_kernel = dim_of(params, "lstm1/w", 0);
  c.validate();
  return c;
}

void ArchitectureConfig::validate() const {
  const int stride_total = 8;
  if (height <= 0 || width <= 0 || height % stride_total != 0 || width % stride_total != 0) {
    throw std::invalid_argument("input size " + std::to_string(height) + "x" + std::to_string(width) +
                                " must be a positive multiple of 8");
  }
  if (input_channels <= 0) throw std::invalid_argument("input channels must be positive");
  for (int c : channels)
    if (c <= 0) throw std::invalid_argument("channel counts must be positive");
  for (int i : {2, 3, 4}) {
    if (channels[static_cast<std::size_t>(i)] % (block * block) != 0) {
      throw std::invalid_argument("conv" + std::to_string(i + 1) + " channels must be divisible by 4");
    }
  }
  for (int k : conv_kernels)
    if (k <= 0 || k % 2 == 0) throw std::invalid_argument("kernel sizes must be odd and positive");
  if (lstm_kernel <= 0 || lstm_kernel % 2 == 0) throw std::invalid_argument("kernel sizes must be odd and positive");
}

template <typename T>
nn::ParamSet<T> init_params(const ArchitectureConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  nn::ParamSet<T> p;
  auto weights = [&](const std::string& name, Shape shape) {
    Tensor<T> w(std::move(shape));
    for (auto& v : w.values()) v = static_cast<T>(normal(rng));
    p.add(name, std::move(w));
  };
  auto norm = [&](const std::string& name, int channels) {
    p.add(name + "/gamma", Tensor<T>({channels}, T(1)));
    p.add(name + "/beta", Tensor<T>({channels}, T(0)));
  };
  const auto& ch = config.channels;
  const auto& ks = config.conv_kernels;
  const int bb = config.block * config.block;
  // Input channels of conv1..conv6.
  const std::array<int, 6> conv_in{config.input_channels, ch[0], ch[1], ch[2] / bb, ch[3] / bb, ch[4] / bb};
  const std::array<int, 6> conv_out{ch[0], ch[1], ch[2], ch[3], ch[4], 1};
  for (int i = 0; i < 6; ++i) {
    const auto u = static_cast<std::size_t>(i);
    weights(idx("conv", i + 1) + "/w", {ks[u], ks[u], conv_in[u], conv_out[u]});
    p.add(idx("conv", i + 1) + "/b", Tensor<T>({conv_out[u]}));
    if (i < 5) norm(idx("ln_conv", i + 1), conv_out[u]);
    if (i < 5) {
      const int c = ch[u];
      const int k = config.lstm_kernel;
      weights(idx("lstm", i + 1) + "/w", {k, k, 2 * c, 4 * c});
      Tensor<T> b({4 * c});
      for (int j = c; j < 2 * c; ++j) b[static_cast<std::size_t>(j)] = T(1);  // forget gate
      p.add(idx("lstm", i + 1) + "/b", std::move(b));
      norm(idx("ln_lstm", i + 1), c);
    }
  }
  return p;
}

template <typename T>
BoundParams<T>::BoundParams(nn::Tape<T>& tape, const nn::ParamSet<T>& params, bool requires_grad) : tape_(&tape) {
  for (const auto& e : params) {
    names_.push_back(e.name);
    vars_.push_back(tape.leaf(e.value, requires_grad));
  }
}

template <typename T>
Var<T> BoundParams<T>::operator()(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return vars_[i];
  throw std::invalid_argument("unknown parameter " + name);
}

template <typename T>
SequenceStates<T> zero_states(nn::Tape<T>& tape, const ArchitectureConfig& config) {
  SequenceStates<T> s;
  const std::array<int, 5> scale{2, 4, 8, 4, 2};
  for (int i = 0; i < kLstmLayers; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const Shape shape{1, config.height / scale[u], config.width / scale[u], config.channels[u]};
    s[u].h = tape.leaf(Tensor<T>(shape));
    s[u].c = tape.leaf(Tensor<T>(shape));
  }
  return s;
}

template <typename T>
Var<T> conv_lstm_cell(Var<T> x, LstmState<T>& state, Var<T> w, Var<T> b) {
  const Shape& xs = x.shape();
  const Shape& hs = state.h.shape();
  if (xs.size() != 4 || hs.size() != 4 || xs[0] != hs[0] || xs[1] != hs[1] || xs[2] != hs[2]) {
    throw std::invalid_argument("conv_lstm_cell: input " + nn::shape_str(xs) + " vs state " + nn::shape_str(hs));
  }
  const int c = hs[3];
  Var<T> z = nn::conv2d(nn::concat_channels(x, state.h), w, b, 1);
  if (z.shape()[3] != 4 * c) throw std::invalid_argument("conv_lstm_cell: gate kernel must produce 4*C channels");
  Var<T> i = nn::sigmoid(nn::slice_channels(z, 0, c));
  Var<T> f = nn::sigmoid(nn::slice_channels(z, c, c));
  Var<T> o = nn::sigmoid(nn::slice_channels(z, 2 * c, c));
  Var<T> g = nn::tanh(nn::slice_channels(z, 3 * c, c));
  state.c = nn::add(nn::mul(f, state.c), nn::mul(i, g));
  state.h = nn::mul(o, nn::tanh(state.c));
  return state.h;
}

template <typename T>
Var<T> forward_step(const BoundParams<T>& p, const ArchitectureConfig& config, Var<T> frame,
                    SequenceStates<T>& states, std::vector<ShapeRecord>* trace) {
  const Shape expected{1, config.height, config.width, config.input_channels};
  if (frame.shape() != expected) {
    throw std::invalid_argument("forward_step: frame " + nn::shape_str(frame.shape()) + ", expected " +
                                nn::shape_str(expected));
  }
  auto note = [&](const char* layer, Var<T> v) {
    if (trace) trace->push_back({layer, hwc(v.shape())});
  };
  auto conv = [&](int i, Var<T> x, int stride) {
    return nn::conv2d(x, p(idx("conv", i) + "/w"), p(idx("conv", i) + "/b"), stride);
  };
  auto norm = [&](const std::string& name, Var<T> x) {
    return nn::layer_norm(x, p(name + "/gamma"), p(name + "/beta"));
  };
  auto lstm = [&](int i, Var<T> x) {
    return conv_lstm_cell(x, states[static_cast<std::size_t>(i - 1)], p(idx("lstm", i) + "/w"),
                          p(idx("lstm", i) + "/b"));
  };
  static constexpr const char* kConvNames[] = {"conv1", "conv2", "conv3", "conv4", "conv5"};
  static constexpr const char* kLstmNames[] = {"conv-lstm1", "conv-lstm2", "conv-lstm3", "conv-lstm4",
                                               "conv-lstm5"};
  static constexpr const char* kDsNames[] = {"ds1", "ds2", "ds3"};

  note("input", frame);
  Var<T> x = frame;
  for (int i = 1; i <= 5; ++i) {
    if (i >= 4) {
      x = nn::depth_to_space(x, config.block);
      note(kDsNames[i - 4], x);
    }
    x = conv(i, x, i <= 3 ? 2 : 1);
    note(kConvNames[i - 1], x);
    x = norm(idx("ln_conv", i), x);
    x = lstm(i, x);
    note(kLstmNames[i - 1], x);
    x = norm(idx("ln_lstm", i), x);
  }
  x = nn::depth_to_space(x, config.block);
  note(kDsNames[2], x);
  x = conv(6, x, 1);
  note("conv6", x);
  x = nn::sigmoid(x);
  note("sigmoid", x);
  return x;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  if (image.channels != 3) throw std::invalid_argument("image_to_tensor: expected an RGB image");
  Tensor<T> t({1, image.height, image.width, 3});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<T>(image.pixels[i]) / T(255);
  return t;
}

template <typename T>
std::vector<Tensor<T>> forward_sequence(const nn::ParamSet<T>& params, const ArchitectureConfig& config,
                                        const std::vector<Tensor<T>>& frames) {
  nn::Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  SequenceStates<T> states = zero_states(tape, config);
  std::vector<Tensor<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(forward_step(bound, config, tape.leaf(f), states).value());
  return out;
}

#define GEOWARP_INSTANTIATE_MODEL(T)                                                                          \
  template nn::ParamSet<T> init_params<T>(const ArchitectureConfig&, std::uint64_t);                          \
  template class BoundParams<T>;                                                                              \
  template SequenceStates<T> zero_states<T>(nn::Tape<T>&, const ArchitectureConfig&);                         \
  template Var<T> conv_lstm_cell<T>(Var<T>, LstmState<T>&, Var<T>, Var<T>);                                   \
  template Var<T> forward_step<T>(const BoundParams<T>&, const ArchitectureConfig&, Var<T>, SequenceStates<T>&, \
                                  std::vector<ShapeRecord>*);                                                 \
  template Tensor<T> image_to_tensor<T>(const Image&);                                                        \
  template std::vector<Tensor<T>> forward_sequence<T>(const nn::ParamSet<T>&, const ArchitectureConfig&,      \
                                                      const std::vector<Tensor<T>>&);

GEOWARP_INSTANTIATE_MODEL(float)
GEOWARP_INSTANTIATE_MODEL(double)

}  // namespace geowarp
