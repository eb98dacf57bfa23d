#pragma once

// Recurrent encoder/decoder depth network:
//
//   conv1 s2 -> lstm1 -> conv2 s2 -> lstm2 -> conv3 s2 -> lstm3
//   -> ds1 -> conv4 -> lstm4 -> ds2 -> conv5 -> lstm5 -> ds3 -> conv6 -> sigmoid
//
// Layer norm follows conv1..conv5 and every conv-LSTM output. Each conv-LSTM
// runs one fused gate convolution over [x || h] producing i, f, o, g.

#include "geowarp/image.hpp"
#include "geowarp/nn/ops.hpp"
#include "geowarp/nn/params.hpp"
#include "geowarp/nn/tape.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace geowarp {

inline constexpr int kLstmLayers = 5;

struct ArchitectureConfig {
  int height = 88;
  int width = 288;
  int input_channels = 3;
  // Output channels of conv1..conv5; conv-LSTM i keeps channels[i].
  std::array<int, 5> channels{32, 64, 128, 64, 32};
  std::array<int, 6> conv_kernels{5, 3, 3, 3, 3, 5};
  int lstm_kernel = 5;
  int block = 2;

  static ArchitectureConfig full();
  // Desk-scale variant: 24x72 input and a quarter of the channels.
  static ArchitectureConfig reduced();
  // Kernel sizes and channels read back from parameter shapes.
  static ArchitectureConfig from_params(const nn::ParamSet<float>& params, int height, int width);

  // Throws std::invalid_argument when the sizes do not divide through the
  // stride-2 and depth-to-space stages.
  void validate() const;
  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

template <typename T>
nn::ParamSet<T> init_params(const ArchitectureConfig& config, std::uint64_t seed);

template <typename T>
struct LstmState {
  nn::Var<T> h;
  nn::Var<T> c;
};

template <typename T>
using SequenceStates = std::array<LstmState<T>, kLstmLayers>;

// Parameters placed on a tape as leaves, addressable by name.
template <typename T>
class BoundParams {
 public:
  BoundParams(nn::Tape<T>& tape, const nn::ParamSet<T>& params, bool requires_grad);
  nn::Var<T> operator()(const std::string& name) const;
  const std::vector<nn::Var<T>>& vars() const { return vars_; }
  nn::Tape<T>& tape() const { return *tape_; }

 private:
  nn::Tape<T>* tape_;
  std::vector<std::string> names_;
  std::vector<nn::Var<T>> vars_;
};

struct ShapeRecord {
  std::string layer;
  nn::Shape shape;  // H, W, C
};

// All-zero states for a batch-1 input of the configured size.
template <typename T>
SequenceStates<T> zero_states(nn::Tape<T>& tape, const ArchitectureConfig& config);

// One timestep: frame is 1xHxWx3 in [0, 1]; returns 1xHxWx1 labels in (0, 1).
// When trace is set, appends one record per layer output.
template <typename T>
nn::Var<T> forward_step(const BoundParams<T>& params, const ArchitectureConfig& config, nn::Var<T> frame,
                        SequenceStates<T>& states, std::vector<ShapeRecord>* trace = nullptr);

template <typename T>
nn::Var<T> conv_lstm_cell(nn::Var<T> x, LstmState<T>& state, nn::Var<T> w, nn::Var<T> b);

// Converts an 8-bit RGB image to a 1xHxWx3 tensor scaled to [0, 1].
template <typename T>
nn::Tensor<T> image_to_tensor(const Image& image);

// Value-level unrolled inference from zero state: one label map (1xHxWx1)
// per input frame.
template <typename T>
std::vector<nn::Tensor<T>> forward_sequence(const nn::ParamSet<T>& params, const ArchitectureConfig& config,
                                            const std::vector<nn::Tensor<T>>& frames);

}  // namespace geowarp
