#pragma once

#include "geowarp/dataset.hpp"
#include "geowarp/depth_data.hpp"
#include "geowarp/losses.hpp"
#include "geowarp/model.hpp"
#include "geowarp/nn/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace geowarp {

// One sequence ready for the network: frames scaled to [0, 1] and label maps
// with their masks.
struct TrainingExample {
  std::vector<nn::Tensor<float>> frames;
  std::vector<nn::Tensor<float>> labels;
  std::vector<std::vector<std::uint8_t>> masks;
};

TrainingExample make_example(const SequenceRecord& sequence, const DepthLabelConfig& labels);
std::vector<TrainingExample> make_examples(const std::vector<SequenceRecord>& sequences,
                                           const DepthLabelConfig& labels);

struct TrainOptions {
  int steps = 1000;
  int batch = 8;
  double lr = 1e-4;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
  int eval_every = 0;  // 0 disables periodic evaluation
};

struct StepLog {
  int step = 0;
  double loss = 0.0;
  double seconds = 0.0;  // wall time since training started
};

struct EvalLog {
  int step = 0;
  double loss = 0.0;
};

struct TrainResult {
  nn::ParamSet<float> params;
  std::vector<StepLog> steps;
  std::vector<EvalLog> evals;
};

// Per-step hook, e.g. for progress output.
using StepCallback = std::function<void(const StepLog&)>;

// Trains from init_params(config, options.seed). Each step draws `batch`
// sequences from a seeded shuffle, runs them on independent tapes and sums
// their gradients in index order. Throws std::invalid_argument for an empty
// training set.
TrainResult train(const std::vector<TrainingExample>& data, const ArchitectureConfig& config,
                  const LossConfig& loss, const TrainOptions& options,
                  const std::vector<TrainingExample>& eval_data = {}, const StepCallback& on_step = {});

// Same, continuing from given parameters.
TrainResult train_from(nn::ParamSet<float> params, const std::vector<TrainingExample>& data,
                       const ArchitectureConfig& config, const LossConfig& loss, const TrainOptions& options,
                       const std::vector<TrainingExample>& eval_data = {}, const StepCallback& on_step = {});

// Mean sequence loss over a set of examples, without gradients.
double evaluate_loss(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                     const std::vector<TrainingExample>& data, const LossConfig& loss);

// Loss value and parameter gradients of one example.
template <typename T>
double example_gradient(const nn::ParamSet<T>& params, const ArchitectureConfig& config,
                        const std::vector<nn::Tensor<T>>& frames, const std::vector<nn::Tensor<T>>& labels,
                        const std::vector<std::vector<std::uint8_t>>& masks, const LossConfig& loss,
                        std::vector<nn::Tensor<T>>* grads);

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepLog>& steps);

// Training run description read from JSON. Relative paths resolve against
// the directory holding the config file.
struct TrainConfig {
  std::filesystem::path data;
  std::filesystem::path eval_data;  // optional
  std::filesystem::path checkpoint = "model.gwck";
  std::filesystem::path loss_log = "loss.csv";
  std::string architecture = "reduced";  // reduced | full
  int seq_len = 10;
  TrainOptions options;
  LossConfig loss;
  DepthLabelConfig labels;

  static TrainConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static TrainConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

LossConfig loss_config_from_json(const nlohmann::json& j);
DepthLabelConfig label_config_from_json(const nlohmann::json& j);
nlohmann::json label_config_to_json(const DepthLabelConfig& cfg);

}  // namespace geowarp
