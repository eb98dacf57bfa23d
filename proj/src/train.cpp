#include "geowarp/train.hpp"

#include "geowarp/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <stdexcept>

namespace geowarp {
namespace fs = std::filesystem;
using nlohmann::json;

TrainingExample make_example(const SequenceRecord& sequence, const DepthLabelConfig& labels) {
  TrainingExample ex;
  for (const auto& f : sequence.frames) {
    ex.frames.push_back(image_to_tensor<float>(f.rgb));
    LabelMap lm = make_labels(f.depth, labels);
    ex.labels.emplace_back(nn::Shape{1, lm.height, lm.width, 1}, std::move(lm.labels));
    ex.masks.push_back(std::move(lm.mask));
  }
  return ex;
}

std::vector<TrainingExample> make_examples(const std::vector<SequenceRecord>& sequences,
                                           const DepthLabelConfig& labels) {
  std::vector<TrainingExample> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(make_example(s, labels));
  return out;
}

template <typename T>
double example_gradient(const nn::ParamSet<T>& params, const ArchitectureConfig& config,
                        const std::vector<nn::Tensor<T>>& frames, const std::vector<nn::Tensor<T>>& labels,
                        const std::vector<std::vector<std::uint8_t>>& masks, const LossConfig& loss,
                        std::vector<nn::Tensor<T>>* grads) {
  nn::Tape<T> tape;
  BoundParams<T> bound(tape, params, grads != nullptr);
  SequenceStates<T> states = zero_states(tape, config);
  std::vector<nn::Var<T>> preds;
  for (const auto& f : frames) preds.push_back(forward_step(bound, config, tape.leaf(f), states));
  nn::Var<T> total = sequence_loss(preds, labels, masks, loss);
  const double value = total.value()[0];
  if (grads) {
    tape.backward(total);
    grads->clear();
    for (const auto& v : bound.vars()) grads->push_back(tape.grad_of(v));
  }
  return value;
}

template double example_gradient<float>(const nn::ParamSet<float>&, const ArchitectureConfig&,
                                        const std::vector<nn::Tensor<float>>&, const std::vector<nn::Tensor<float>>&,
                                        const std::vector<std::vector<std::uint8_t>>&, const LossConfig&,
                                        std::vector<nn::Tensor<float>>*);
template double example_gradient<double>(const nn::ParamSet<double>&, const ArchitectureConfig&,
                                         const std::vector<nn::Tensor<double>>&,
                                         const std::vector<nn::Tensor<double>>&,
                                         const std::vector<std::vector<std::uint8_t>>&, const LossConfig&,
                                         std::vector<nn::Tensor<double>>*);

double evaluate_loss(const nn::ParamSet<float>& params, const ArchitectureConfig& config,
                     const std::vector<TrainingExample>& data, const LossConfig& loss) {
  if (data.empty()) throw std::invalid_argument("evaluate_loss: empty data set");
  std::vector<double> values(data.size());
  const int n = static_cast<int>(data.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    values[static_cast<std::size_t>(i)] = example_gradient<float>(params, config, ex.frames, ex.labels, ex.masks,
                                                                  loss, nullptr);
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

TrainResult train(const std::vector<TrainingExample>& data, const ArchitectureConfig& config,
                  const LossConfig& loss, const TrainOptions& options,
                  const std::vector<TrainingExample>& eval_data, const StepCallback& on_step) {
  return train_from(init_params<float>(config, options.seed), data, config, loss, options, eval_data, on_step);
}

TrainResult train_from(nn::ParamSet<float> params, const std::vector<TrainingExample>& data,
                       const ArchitectureConfig& config, const LossConfig& loss, const TrainOptions& options,
                       const std::vector<TrainingExample>& eval_data, const StepCallback& on_step) {
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  if (options.batch < 1 || options.steps < 0) throw std::invalid_argument("train: batch >= 1 and steps >= 0 required");
  config.validate();

  TrainResult result;
  const nn::AdamConfig adam{options.lr, 0.9, 0.999, 1e-8};
  std::vector<nn::AdamMoments<float>> moments(params.size());
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  const auto start = std::chrono::steady_clock::now();
  const int batch = options.batch;
  std::vector<std::vector<nn::Tensor<float>>> grads(static_cast<std::size_t>(batch));
  std::vector<double> losses(static_cast<std::size_t>(batch));
  std::vector<std::size_t> picks(static_cast<std::size_t>(batch));

  for (int step = 1; step <= options.steps; ++step) {
    for (auto& p : picks) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      p = order[cursor++];
    }
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < batch; ++b) {
      const auto u = static_cast<std::size_t>(b);
      const auto& ex = data[picks[u]];
      losses[u] = example_gradient<float>(params, config, ex.frames, ex.labels, ex.masks, loss, &grads[u]);
    }
    // Index-ordered reduction keeps the result independent of scheduling.
    std::vector<nn::Tensor<float>> total = std::move(grads[0]);
    for (std::size_t b = 1; b < grads.size(); ++b)
      for (std::size_t i = 0; i < total.size(); ++i)
        for (std::size_t j = 0; j < total[i].size(); ++j) total[i][j] += grads[b][i][j];
    const float inv = 1.0f / static_cast<float>(batch);
    for (auto& g : total)
      for (auto& v : g.values()) v *= inv;
    if (options.clip_norm > 0.0) nn::clip_global_norm(total, options.clip_norm);
    for (std::size_t i = 0; i < params.size(); ++i) nn::adam_step(params[i].value, total[i], moments[i], step, adam);

    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= batch;
    if (!std::isfinite(mean)) throw NumericError("training loss became non-finite at step " + std::to_string(step));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.steps.push_back({step, mean, secs});
    if (on_step) on_step(result.steps.back());
    if (options.eval_every > 0 && !eval_data.empty() && step % options.eval_every == 0) {
      result.evals.push_back({step, evaluate_loss(params, config, eval_data, loss)});
    }
  }
  result.params = std::move(params);
  return result;
}

void write_loss_csv(const fs::path& path, const std::vector<StepLog>& steps) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss,wall_time\n" << std::setprecision(9);
  for (const auto& s : steps) out << s.step << ',' << s.loss << ',' << s.seconds << '\n';
}

LossConfig loss_config_from_json(const json& j) {
  LossConfig cfg;
  const std::string kind = j.value("kind", std::string("l2"));
  if (kind == "l2") {
    cfg.kind = LossKind::kL2;
  } else if (kind == "berhu") {
    cfg.kind = LossKind::kBerHu;
  } else {
    throw DataError("unknown loss kind '" + kind + "'");
  }
  cfg.lambda_gdl = j.value("lambda_gdl", 0.0);
  cfg.alpha = j.value("alpha", std::vector<double>{});
  return cfg;
}

DepthLabelConfig label_config_from_json(const json& j) {
  DepthLabelConfig cfg;
  cfg.d_min = j.value("d_min", cfg.d_min);
  cfg.d_max = j.value("d_max", cfg.d_max);
  cfg.label_lo = j.value("label_lo", cfg.label_lo);
  cfg.label_hi = j.value("label_hi", cfg.label_hi);
  const std::string t = j.value("transform", std::string("inverse"));
  if (t == "inverse") {
    cfg.transform = LabelTransform::kInverse;
  } else if (t == "log") {
    cfg.transform = LabelTransform::kLog;
  } else {
    throw DataError("unknown label transform '" + t + "'");
  }
  cfg.validate();
  return cfg;
}

json label_config_to_json(const DepthLabelConfig& cfg) {
  return {{"d_min", cfg.d_min},
          {"d_max", cfg.d_max},
          {"label_lo", cfg.label_lo},
          {"label_hi", cfg.label_hi},
          {"transform", cfg.transform == LabelTransform::kInverse ? "inverse" : "log"}};
}

TrainConfig TrainConfig::from_json(const json& j, const fs::path& base_dir) {
  try {
    TrainConfig c;
    if (j.contains("version") && j.at("version").get<int>() != 1) throw DataError("unsupported config version");
    auto path = [&](const char* key, const fs::path& fallback) {
      if (!j.contains(key)) return fallback.empty() ? fallback : base_dir / fallback;
      fs::path p = j.at(key).get<std::string>();
      return p.is_absolute() ? p : base_dir / p;
    };
    if (!j.contains("data")) throw DataError("training config needs a \"data\" directory");
    c.data = path("data", {});
    c.eval_data = path("eval_data", {});
    c.checkpoint = path("checkpoint", c.checkpoint);
    c.loss_log = path("loss_log", c.loss_log);
    c.architecture = j.value("architecture", c.architecture);
    if (c.architecture != "reduced" && c.architecture != "full") {
      throw DataError("architecture must be \"reduced\" or \"full\"");
    }
    c.seq_len = j.value("seq_len", c.seq_len);
    c.options.steps = j.value("steps", c.options.steps);
    c.options.batch = j.value("batch", c.options.batch);
    c.options.lr = j.value("lr", c.options.lr);
    c.options.clip_norm = j.value("clip_norm", c.options.clip_norm);
    c.options.seed = j.value("seed", c.options.seed);
    c.options.eval_every = j.value("eval_every", c.options.eval_every);
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
    if (j.contains("labels")) c.labels = label_config_from_json(j.at("labels"));
    if (c.seq_len < 2 || c.options.batch < 1 || c.options.steps < 0 || !(c.options.lr > 0.0)) {
      throw DataError("seq_len >= 2, batch >= 1, steps >= 0 and lr > 0 are required");
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad training config: ") + e.what());
  }
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json TrainConfig::to_json() const {
  json loss_j{{"kind", loss.kind == LossKind::kL2 ? "l2" : "berhu"}, {"lambda_gdl", loss.lambda_gdl}};
  if (!loss.alpha.empty()) loss_j["alpha"] = loss.alpha;
  json j{{"version", 1},
         {"data", data.string()},
         {"checkpoint", checkpoint.string()},
         {"loss_log", loss_log.string()},
         {"architecture", architecture},
         {"seq_len", seq_len},
         {"steps", options.steps},
         {"batch", options.batch},
         {"lr", options.lr},
         {"clip_norm", options.clip_norm},
         {"seed", options.seed},
         {"eval_every", options.eval_every},
         {"loss", loss_j},
         {"labels", label_config_to_json(labels)}};
  if (!eval_data.empty()) j["eval_data"] = eval_data.string();
  return j;
}

}  // namespace geowarp
