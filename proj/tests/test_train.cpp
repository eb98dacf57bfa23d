#include "geowarp/errors.hpp"
#include "geowarp/train.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace geowarp;
using namespace geowarp::testing;
namespace fs = std::filesystem;

namespace {

ArchitectureConfig tiny_config() {
  ArchitectureConfig c = ArchitectureConfig::reduced();
  c.height = 8;
  c.width = 16;
  return c;
}

std::vector<TrainingExample> tiny_examples(int count, int k) {
  const CameraIntrinsics cam = desk_intrinsics().resized(16, 8);
  std::vector<SequenceRecord> seqs;
  for (int i = 0; i < count; ++i) seqs.push_back({render_synthetic_sequence(two_box_scene(200 + i, cam, k))});
  return make_examples(seqs, {});
}

}  // namespace

TEST_CASE("make_example") {
  const CameraIntrinsics cam = desk_intrinsics();
  const SequenceRecord seq{render_synthetic_sequence(two_box_scene(1, cam, 3))};
  const TrainingExample e = make_example(seq, {});
  REQUIRE(e.frames.size() == 3);
  REQUIRE(e.labels.size() == 3);
  REQUIRE(e.masks.size() == 3);
  CHECK(e.frames[0].shape() == nn::Shape{1, 24, 72, 3});
  CHECK(e.labels[0].shape() == nn::Shape{1, 24, 72, 1});
  CHECK(e.frames[1][5] == doctest::Approx(seq.frames[1].rgb.pixels[5] / 255.0f));
  for (std::size_t i = 0; i < e.masks[2].size(); ++i) {
    if (!e.masks[2][i]) {
      CHECK(e.labels[2][i] == 0.0f);
    } else {
      CHECK(e.labels[2][i] >= 0.25f);
      CHECK(e.labels[2][i] <= 0.75f);
    }
  }
}

TEST_CASE("zero steps returns the initial parameters") {
  const auto data = tiny_examples(2, 3);
  TrainOptions o;
  o.steps = 0;
  o.seed = 4;
  const TrainResult r = train(data, tiny_config(), {}, o);
  CHECK(r.params == init_params<float>(tiny_config(), 4));
  CHECK(r.steps.empty());
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto data = tiny_examples(4, 3);
  TrainOptions o;
  o.steps = 6;
  o.batch = 2;
  o.lr = 1e-3;
  o.eval_every = 3;
  const TrainResult a = train(data, tiny_config(), {}, o, data);
  const TrainResult b = train(data, tiny_config(), {}, o, data);
  REQUIRE(a.steps.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a.steps[i].loss == b.steps[i].loss);
  CHECK(a.params == b.params);
  REQUIRE(a.evals.size() == b.evals.size());
  CHECK(a.evals.size() >= 2);
  for (std::size_t i = 0; i < a.evals.size(); ++i) CHECK(a.evals[i].loss == b.evals[i].loss);

  o.seed = 2;
  const TrainResult c = train(data, tiny_config(), {}, o);
  CHECK_FALSE(c.params == a.params);

  // train is train_from on init_params with the same seed.
  o.seed = 1;
  const TrainResult d = train_from(init_params<float>(tiny_config(), 1), data, tiny_config(), {}, o, data);
  for (std::size_t i = 0; i < 6; ++i) CHECK(d.steps[i].loss == a.steps[i].loss);
}

TEST_CASE("a single sequence can be overfit") {
  const auto data = tiny_examples(1, 3);
  TrainOptions o;
  o.steps = 300;
  o.batch = 1;
  o.lr = 3e-3;
  const double before = evaluate_loss(init_params<float>(tiny_config(), o.seed), tiny_config(), data, {});
  const TrainResult r = train(data, tiny_config(), {}, o);
  const double after = evaluate_loss(r.params, tiny_config(), data, {});
  INFO("before " << before << " after " << after);
  CHECK(after < 0.1 * before);
}

TEST_CASE("training argument checks") {
  TrainOptions o;
  CHECK_THROWS_AS(train({}, tiny_config(), {}, o), std::invalid_argument);
  const auto data = tiny_examples(1, 2);
  o.batch = 0;
  CHECK_THROWS_AS(train(data, tiny_config(), {}, o), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_loss(init_params<float>(tiny_config(), 1), tiny_config(), {}, {}), std::invalid_argument);
}

TEST_CASE("loss csv") {
  const auto dir = scratch_dir("train_csv");
  write_loss_csv(dir / "loss.csv", {{1, 0.5, 0.1}, {2, 0.25, 0.2}});
  std::ifstream in(dir / "loss.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header.starts_with("step,loss"));
  CHECK(first.starts_with("1,0.5"));
}

TEST_CASE("training config JSON") {
  const fs::path base = "/data/runs";
  const nlohmann::json j = {{"version", 1},
                            {"data", "train"},
                            {"eval_data", "/abs/eval"},
                            {"steps", 120},
                            {"batch", 4},
                            {"lr", 5e-4},
                            {"seed", 9},
                            {"seq_len", 6},
                            {"architecture", "full"},
                            {"loss", {{"kind", "berhu"}, {"lambda_gdl", 0.5}}},
                            {"labels", {{"transform", "log"}, {"d_max", 60.0}}}};
  const TrainConfig c = TrainConfig::from_json(j, base);
  CHECK(c.data == base / "train");
  CHECK(c.eval_data == fs::path("/abs/eval"));
  CHECK(c.checkpoint == base / "model.gwck");
  CHECK(c.options.steps == 120);
  CHECK(c.options.batch == 4);
  CHECK(c.options.lr == 5e-4);
  CHECK(c.options.seed == 9);
  CHECK(c.seq_len == 6);
  CHECK(c.architecture == "full");
  CHECK(c.loss.kind == LossKind::kBerHu);
  CHECK(c.loss.lambda_gdl == 0.5);
  CHECK(c.labels.d_max == 60.0);

  const TrainConfig again = TrainConfig::from_json(c.to_json(), "/elsewhere");
  CHECK(again.data == c.data);
  CHECK(again.options.lr == c.options.lr);
  CHECK(again.loss.kind == c.loss.kind);
  CHECK(again.labels.transform == c.labels.transform);

  CHECK_THROWS_AS(TrainConfig::from_json({{"steps", 3}}, base), DataError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"data", "x"}, {"architecture", "huge"}}, base), DataError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"data", "x"}, {"lr", -1}}, base), DataError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"data", "x"}, {"loss", {{"kind", "l3"}}}}, base), DataError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"data", "x"}, {"version", 2}}, base), DataError);
  CHECK_THROWS_AS(TrainConfig::load("/nonexistent/train.json"), DataError);
}
