#include "cli.hpp"

#include "geowarp/dataset.hpp"
#include "geowarp/errors.hpp"
#include "geowarp/metrics.hpp"
#include "geowarp/service.hpp"
#include "geowarp/synthesis.hpp"
#include "geowarp/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace geowarp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

Image coverage_image(const FramePrediction& p) {
  Image im(p.rgb.width, p.rgb.height, 1, 0);
  for (std::size_t i = 0; i < p.coverage.size(); ++i) im.pixels[i] = p.coverage[i] ? 255 : 0;
  return im;
}

void write_prediction(const fs::path& dir, const std::string& stem, const FramePrediction& p) {
  write_png(dir / (stem + ".png"), p.rgb);
  write_dmap(dir / (stem + ".dmap"), p.depth);
  write_png(dir / (stem + "_coverage.png"), coverage_image(p));
}

json stats_json(const FramePrediction& p) {
  return {{"coverage", p.coverage_fraction()},
          {"points", p.stats.points},
          {"culled_near", p.stats.culled_near},
          {"culled_outside", p.stats.culled_outside},
          {"overwritten", p.stats.overwritten},
          {"gaps", p.stats.gaps}};
}

struct GenDataArgs {
  std::string spec;
  std::string out;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  const auto scenes = scenes_from_document(read_json(a.spec));
  fs::create_directories(a.out);
  json listing = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i;
    Video v{scenes[i].intrinsics, render_synthetic_sequence(scenes[i])};
    write_video(fs::path(a.out) / name.str(), v);
    listing.push_back({{"video", name.str()}, {"frames", v.frames.size()}});
  }
  out << json{{"version", 1}, {"videos", listing}}.dump() << '\n';
  return kOk;
}

struct MakeDepthArgs {
  std::string scans;
  std::string intrinsics;
  std::string calibration;
  std::string out;
  double d_min = 3.0;
  double d_max = 80.0;
};

// Scan files are text with one "x,y,z" (or whitespace separated) point per
// line in the sensor frame; lines starting with '#' or a letter are skipped.
std::vector<Eigen::Vector3d> read_scan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected three finite numbers");
    }
    pts.emplace_back(x, y, z);
  }
  return pts;
}

RigidTransform read_calibration(const fs::path& path) {
  const json j = read_json(path);
  try {
    const auto r = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw DataError("calibration needs 9 rotation and 3 translation values");
    RigidTransform out;
    for (int i = 0; i < 9; ++i) out.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
    out.translation = {t[0], t[1], t[2]};
    if (orthonormality_error(out.rotation) > 1e-6 || out.rotation.determinant() < 0) {
      throw DataError("calibration rotation is not a rotation matrix");
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad calibration: ") + e.what());
  }
}

int make_depth(const MakeDepthArgs& a, std::ostream& out) {
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  DepthLabelConfig cfg;
  cfg.d_min = a.d_min;
  cfg.d_max = a.d_max;
  cfg.validate();
  const RigidTransform calib = a.calibration.empty() ? RigidTransform::identity() : read_calibration(a.calibration);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.scans)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".xyz" || ext == ".txt")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no scan files (*.csv, *.xyz, *.txt) in " + a.scans);
  fs::create_directories(a.out);
  json listing = json::array();
  for (const auto& f : files) {
    const ScanProjection p = scan_to_depth_map({read_scan(f), calib}, k, cfg);
    const fs::path target = fs::path(a.out) / (f.stem().string() + ".dmap");
    write_dmap(target, p.depth);
    listing.push_back({{"scan", f.filename().string()}, {"valid", p.depth.valid_count()}, {"culled", p.culled}});
  }
  out << json{{"version", 1}, {"depth_maps", listing}}.dump() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  int steps = -1;
  int log_every = 10;
  bool quiet = false;
};

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = TrainConfig::load(a.config);
  if (!a.data.empty()) cfg.data = a.data;
  if (a.steps >= 0) cfg.options.steps = a.steps;
  const SequenceDataset ds = load_sequences(cfg.data, cfg.seq_len);
  if (ds.sequences.empty()) throw DataError("no " + std::to_string(cfg.seq_len) + "-frame sequences in " + cfg.data.string());
  ArchitectureConfig arch = cfg.architecture == "full" ? ArchitectureConfig::full() : ArchitectureConfig::reduced();
  arch.height = ds.intrinsics.height;
  arch.width = ds.intrinsics.width;
  arch.validate();
  const auto examples = make_examples(ds.sequences, cfg.labels);
  std::vector<TrainingExample> eval_examples;
  if (!cfg.eval_data.empty()) eval_examples = make_examples(load_sequences(cfg.eval_data, cfg.seq_len).sequences, cfg.labels);

  const TrainResult r = train(examples, arch, cfg.loss, cfg.options, eval_examples, [&](const StepLog& s) {
    if (!a.quiet && a.log_every > 0 && (s.step % a.log_every == 0 || s.step == 1)) {
      err << "step " << s.step << " loss " << s.loss << " (" << std::fixed << std::setprecision(1) << s.seconds
          << " s)\n"
          << std::defaultfloat;
    }
  });
  if (!cfg.checkpoint.parent_path().empty()) fs::create_directories(cfg.checkpoint.parent_path());
  nn::save_checkpoint(cfg.checkpoint, r.params);
  if (!cfg.loss_log.parent_path().empty()) fs::create_directories(cfg.loss_log.parent_path());
  write_loss_csv(cfg.loss_log, r.steps);
  json summary{{"version", 1},
               {"steps", r.steps.size()},
               {"sequences", examples.size()},
               {"checkpoint", cfg.checkpoint.string()},
               {"loss_log", cfg.loss_log.string()}};
  if (!r.steps.empty()) {
    summary["initial_loss"] = r.steps.front().loss;
    summary["final_loss"] = r.steps.back().loss;
  }
  json evals = json::array();
  for (const auto& e : r.evals) evals.push_back({{"step", e.step}, {"loss", e.loss}});
  summary["evals"] = evals;
  out << summary.dump() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  bool oracle = false;
  int seq_len = 10;
  std::string out = "report.json";
  std::string csv;
  std::string footprint = "quad";
};

SplatConfig splat_from(const std::string& footprint) {
  SplatConfig s;
  s.footprint = footprint == "single" ? Footprint::kSingle : Footprint::kQuad;
  return s;
}

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const SequenceDataset ds = load_sequences(a.data, a.seq_len);
  if (ds.sequences.empty()) throw DataError("no " + std::to_string(a.seq_len) + "-frame sequences in " + a.data);
  EvalOptions opt;
  opt.splat = splat_from(a.footprint);
  MetricReport report;
  if (a.oracle) {
    report = evaluate_oracle(ds.sequences, ds.intrinsics, opt);
  } else {
    const auto params = nn::load_checkpoint(a.checkpoint);
    const auto arch = ArchitectureConfig::from_params(params, ds.intrinsics.height, ds.intrinsics.width);
    report = evaluate_model(params, arch, ds.sequences, ds.intrinsics, opt);
  }
  write_report(a.out, a.csv, report);
  out << report.to_json().dump() << '\n';
  return kOk;
}

struct PredictArgs {
  std::string sequence;
  std::string checkpoint;
  bool oracle = false;
  int count = 0;
  std::string out_dir = ".";
  std::string footprint = "quad";
};

int predict_cmd(const PredictArgs& a, std::ostream& out) {
  const Video v = read_video(a.sequence);
  const std::size_t k = a.count > 0 ? static_cast<std::size_t>(a.count) : v.frames.size();
  if (k < 2 || k > v.frames.size()) {
    throw DataError("need 2 <= count <= " + std::to_string(v.frames.size()) + " frames in " + a.sequence);
  }
  std::vector<Image> frames;
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < k; ++i) {
    if (i + 1 < k) frames.push_back(v.frames[i].rgb);
    poses.push_back(v.frames[i].pose);
  }
  DepthPredictor predictor;
  nn::ParamSet<float> params;
  if (a.oracle) {
    const DepthMap truth = v.frames[k - 2].depth;
    predictor = [truth](const std::vector<Image>&) { return truth; };
  } else {
    params = nn::load_checkpoint(a.checkpoint);
    predictor = model_predictor(params, ArchitectureConfig::from_params(params, v.intrinsics.height, v.intrinsics.width));
  }
  const FramePrediction p = predict_next(predictor, frames, poses, v.intrinsics, splat_from(a.footprint));
  fs::create_directories(a.out_dir);
  write_prediction(a.out_dir, "next", p);
  json summary = stats_json(p);
  summary["version"] = 1;
  if (p.stats.gaps < p.coverage.size()) {
    summary["psnr"] = metric_to_json(psnr(p.rgb, v.frames[k - 1].rgb, p.coverage));
  }
  out << summary.dump() << '\n';
  return kOk;
}

struct SimulateArgs {
  std::string frame;
  std::string depth;
  std::string intrinsics;
  std::string motions;
  std::string out_dir = ".";
  std::string footprint = "quad";
};

int simulate_cmd(const SimulateArgs& a, std::ostream& out) {
  const Image rgb = read_png(a.frame);
  const DepthMap depth = read_dmap(a.depth);
  const CameraIntrinsics k = read_intrinsics(a.intrinsics);
  const json doc = read_json(a.motions);
  const std::string convention = doc.value("convention", std::string("camera"));
  if (convention != "camera" && convention != "points") {
    throw DataError("motion convention must be \"camera\" or \"points\"");
  }
  if (!doc.contains("motions") || !doc.at("motions").is_array()) throw DataError("motions file needs a \"motions\" array");
  std::vector<EgoMotion> motions;
  for (const auto& m : doc.at("motions")) {
    EgoMotion e;
    try {
      e = motion_from_json(m);
    } catch (const std::invalid_argument& ex) {
      throw DataError(ex.what());
    }
    motions.push_back(convention == "camera" ? EgoMotion::from_transform(e.to_transform().inverse()) : e);
  }
  const auto preds = simulate_hypothetical(rgb, depth, motions, k, splat_from(a.footprint));
  fs::create_directories(a.out_dir);
  json listing = json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::ostringstream stem;
    stem << "sim_" << std::setw(3) << std::setfill('0') << i;
    write_prediction(a.out_dir, stem.str(), preds[i]);
    json s = stats_json(preds[i]);
    s["output"] = stem.str() + ".png";
    listing.push_back(s);
  }
  out << json{{"version", 1}, {"predictions", listing}}.dump() << '\n';
  return kOk;
}

struct ServeArgs {
  std::string data;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int serve_cmd(const ServeArgs& a, std::ostream& out) {
  ExplorerService service(load_service_frames(a.data));
  HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  out << "listening on http://" << a.host << ":" << port << std::endl;
  server.run();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"geowarp: depth-based next-frame prediction toolkit", "geowarp"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* c_gen = app.add_subcommand("gen-data", "Render a synthetic dataset from a scene spec JSON");
  c_gen->add_option("--spec", gd.spec, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--out", gd.out, "Output dataset directory")->required();

  MakeDepthArgs md;
  auto* c_depth = app.add_subcommand("make-depth", "Rasterise point scans into sparse DMAP depth labels");
  c_depth->add_option("--scans", md.scans, "Directory of scan files")->required()->check(CLI::ExistingDirectory);
  c_depth->add_option("--intrinsics", md.intrinsics, "Camera intrinsics JSON")->required()->check(CLI::ExistingFile);
  c_depth->add_option("--calib", md.calibration, "Sensor-to-camera JSON {rotation[9], translation[3]}")
      ->check(CLI::ExistingFile);
  c_depth->add_option("--out", md.out, "Output directory")->required();
  c_depth->add_option("--d-min", md.d_min, "Nearest kept depth (m)");
  c_depth->add_option("--d-max", md.d_max, "Farthest kept depth (m)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the depth network from a config JSON");
  c_train->add_option("--config", tr.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Override the dataset directory");
  c_train->add_option("--steps", tr.steps, "Override the step count");
  c_train->add_option("--log-every", tr.log_every, "Progress interval in steps");
  c_train->add_flag("--quiet", tr.quiet, "No progress output");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score next-frame predictions on a dataset");
  c_eval->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* ck = c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  auto* oracle = c_eval->add_flag("--oracle-depth", ev.oracle, "Warp with ground-truth depth");
  ck->excludes(oracle);
  c_eval->add_option("--seq-len", ev.seq_len, "Sequence length")->check(CLI::Range(2, 100000));
  c_eval->add_option("--out", ev.out, "Report JSON path");
  c_eval->add_option("--csv", ev.csv, "Per-frame-index CSV path");
  c_eval->add_option("--footprint", ev.footprint, "Splat footprint")->check(CLI::IsMember({"quad", "single"}));

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Predict the next frame of a sequence directory");
  c_pred->add_option("--sequence", pr.sequence, "Video directory")->required()->check(CLI::ExistingDirectory);
  auto* pck = c_pred->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  auto* por = c_pred->add_flag("--oracle-depth", pr.oracle, "Warp with ground-truth depth");
  pck->excludes(por);
  c_pred->add_option("--count", pr.count, "Use frames 1..count-1 and poses 1..count (default: all)");
  c_pred->add_option("--out-dir", pr.out_dir, "Output directory");
  c_pred->add_option("--footprint", pr.footprint, "Splat footprint")->check(CLI::IsMember({"quad", "single"}));

  SimulateArgs sm;
  auto* c_sim = app.add_subcommand("simulate", "Warp one frame through hypothetical motions");
  c_sim->add_option("--frame", sm.frame, "RGB PNG")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--depth", sm.depth, "DMAP depth")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--intrinsics", sm.intrinsics, "Camera intrinsics JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--motions", sm.motions, "Motions JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out-dir", sm.out_dir, "Output directory");
  c_sim->add_option("--footprint", sm.footprint, "Splat footprint")->check(CLI::IsMember({"quad", "single"}));

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Run the explorer HTTP service");
  c_serve->add_option("--data", sv.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_serve->add_option("--port", sv.port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
  c_serve->add_option("--host", sv.host, "Bind address");

  std::vector<std::string> argv_store{"geowarp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_eval->parsed() && !ev.oracle && ev.checkpoint.empty()) {
      err << "eval: one of --checkpoint or --oracle-depth is required\n" << c_eval->help();
      return kUsage;
    }
    if (c_pred->parsed() && !pr.oracle && pr.checkpoint.empty()) {
      err << "predict: one of --checkpoint or --oracle-depth is required\n" << c_pred->help();
      return kUsage;
    }
    if (c_gen->parsed()) return gen_data(gd, out);
    if (c_depth->parsed()) return make_depth(md, out);
    if (c_train->parsed()) return train_cmd(tr, out, err);
    if (c_eval->parsed()) return eval_cmd(ev, out);
    if (c_pred->parsed()) return predict_cmd(pr, out);
    if (c_sim->parsed()) return simulate_cmd(sm, out);
    if (c_serve->parsed()) return serve_cmd(sv, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::domain_error& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace geowarp::cli
