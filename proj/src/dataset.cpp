#include "geowarp/dataset.hpp"

#include "geowarp/errors.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace geowarp {
namespace fs = std::filesystem;
namespace {

using detail::get_u32;
using detail::put_u32;
using detail::read_bytes;
using detail::write_bytes;

Eigen::Vector3d vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json pose_to_json(const Pose& p) {
  return {{"x", p.position.x()}, {"y", p.position.y()}, {"z", p.position.z()},
          {"yaw", p.yaw},        {"pitch", p.pitch},    {"roll", p.roll}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  p.position = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
  p.yaw = j.value("yaw", 0.0);
  p.pitch = j.value("pitch", 0.0);
  p.roll = j.value("roll", 0.0);
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_dmap(const DepthMap& depth) {
  std::vector<std::uint8_t> out{'D', 'M', 'A', 'P'};
  out.reserve(12 + depth.size() * 5);
  put_u32(out, static_cast<std::uint32_t>(depth.width));
  put_u32(out, static_cast<std::uint32_t>(depth.height));
  for (double v : depth.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (auto m : depth.mask) out.push_back(m ? 1 : 0);
  return out;
}

DepthMap decode_dmap(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || bytes[0] != 'D' || bytes[1] != 'M' || bytes[2] != 'A' || bytes[3] != 'P') {
    throw DataError("not a DMAP file");
  }
  const std::uint32_t w = get_u32(bytes, 4), h = get_u32(bytes, 8);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (w == 0 || h == 0 || bytes.size() != 12 + n * 5) throw DataError("DMAP size mismatch");
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) d.values[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  for (std::size_t i = 0; i < n; ++i) d.mask[i] = bytes[12 + 4 * n + i] ? 1 : 0;
  return d;
}

void write_dmap(const fs::path& path, const DepthMap& depth) { write_bytes(path, encode_dmap(depth)); }

DepthMap read_dmap(const fs::path& path) {
  try {
    return decode_dmap(read_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"version", 1}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("intrinsics: ") + e.what());
  }
  try {
    k.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return k;
}

CameraIntrinsics read_intrinsics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return intrinsics_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_intrinsics(const fs::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << intrinsics_to_json(k).dump(2) << '\n';
}

void write_poses_csv(const fs::path& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "frame,x,y,z,yaw,pitch,roll\n" << std::setprecision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    out << i << ',' << p.position.x() << ',' << p.position.y() << ',' << p.position.z() << ',' << p.yaw << ','
        << p.pitch << ',' << p.roll << '\n';
  }
}

std::vector<Pose> read_poses_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line_no == 1) continue;  // header
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::size_t index = 0;
    Pose p;
    double x = 0, y = 0, z = 0;
    if (!(row >> index >> x >> y >> z >> p.yaw >> p.pitch >> p.roll)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed pose row");
    }
    if (index != poses.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": frame indices must be consecutive from 0");
    }
    p.position = {x, y, z};
    poses.push_back(p);
  }
  return poses;
}

std::string frame_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

void write_video(const fs::path& dir, const Video& video) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "depth");
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    const auto& f = video.frames[i];
    write_png(dir / "frames" / (frame_stem(i) + ".png"), f.rgb);
    write_dmap(dir / "depth" / (frame_stem(i) + ".dmap"), f.depth);
    poses.push_back(f.pose);
  }
  write_poses_csv(dir / "poses.csv", poses);
  write_intrinsics(dir / "intrinsics.json", video.intrinsics);
}

Video read_video(const fs::path& dir) {
  Video video;
  video.intrinsics = read_intrinsics(dir / "intrinsics.json");
  const auto poses = read_poses_csv(dir / "poses.csv");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Frame f;
    f.rgb = read_png(dir / "frames" / (frame_stem(i) + ".png"));
    f.depth = read_dmap(dir / "depth" / (frame_stem(i) + ".dmap"));
    f.pose = poses[i];
    const auto& k = video.intrinsics;
    if (f.rgb.width != k.width || f.rgb.height != k.height || f.rgb.channels != 3 || f.depth.width != k.width ||
        f.depth.height != k.height) {
      throw DataError(dir.string() + ": frame " + std::to_string(i) + " does not match intrinsics size");
    }
    video.frames.push_back(std::move(f));
  }
  return video;
}

std::vector<fs::path> list_videos(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  if (fs::exists(root / "poses.csv")) return {root};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "poses.csv")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

SequenceDataset load_sequences(const fs::path& root, int k, int stride) {
  SequenceDataset ds;
  bool first = true;
  for (const auto& dir : list_videos(root)) {
    Video v = read_video(dir);
    if (first) {
      ds.intrinsics = v.intrinsics;
      first = false;
    } else if (v.intrinsics.width != ds.intrinsics.width || v.intrinsics.height != ds.intrinsics.height) {
      throw DataError(dir.string() + ": image size differs from the rest of the dataset");
    }
    for (auto& s : split_sequences(v.frames, k, stride)) ds.sequences.push_back(std::move(s));
  }
  if (first) throw DataError("no videos under " + root.string());
  return ds;
}

nlohmann::json scene_to_json(const SyntheticSceneSpec& scene) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : scene.boxes) {
    boxes.push_back({{"min", {b.min_corner.x(), b.min_corner.y(), b.min_corner.z()}},
                     {"max", {b.max_corner.x(), b.max_corner.y(), b.max_corner.z()}},
                     {"seed", b.texture_seed}});
  }
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : scene.trajectory) traj.push_back(pose_to_json(p));
  nlohmann::json j{{"ground_seed", scene.ground_seed}, {"boxes", boxes}, {"trajectory", traj},
                   {"frame_count", scene.frame_count}};
  j["ground_height"] = scene.ground_height ? nlohmann::json(*scene.ground_height) : nlohmann::json(nullptr);
  return j;
}

SyntheticSceneSpec scene_from_json(const nlohmann::json& j, const CameraIntrinsics& k) {
  SyntheticSceneSpec s;
  s.intrinsics = j.contains("intrinsics") ? intrinsics_from_json(j["intrinsics"]) : k;
  try {
    if (j.contains("ground_height") && j["ground_height"].is_null()) {
      s.ground_height.reset();
    } else {
      s.ground_height = j.value("ground_height", 0.0);
    }
    s.ground_seed = j.value("ground_seed", 0u);
    for (const auto& b : j.value("boxes", nlohmann::json::array())) {
      s.boxes.push_back({vec3(b.at("min")), vec3(b.at("max")), b.value("seed", 0u)});
    }
    for (const auto& p : j.at("trajectory")) s.trajectory.push_back(pose_from_json(p));
    s.frame_count = j.value("frame_count", static_cast<int>(s.trajectory.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scene spec: ") + e.what());
  }
  return s;
}

std::vector<SyntheticSceneSpec> scenes_from_document(const nlohmann::json& doc) {
  if (doc.value("version", 1) != 1) throw DataError("scene spec: unsupported version");
  const CameraIntrinsics k = doc.contains("intrinsics") ? intrinsics_from_json(doc["intrinsics"]) : desk_intrinsics();
  std::vector<SyntheticSceneSpec> out;
  for (const auto& s : doc.value("scenes", nlohmann::json::array())) out.push_back(scene_from_json(s, k));
  if (doc.contains("random")) {
    const auto& r = doc["random"];
    StreetSceneOptions opt;
    opt.intrinsics = k;
    try {
      opt.frames = r.value("frames", opt.frames);
      opt.min_boxes = r.value("min_boxes", opt.min_boxes);
      opt.max_boxes = r.value("max_boxes", opt.max_boxes);
      opt.camera_height = r.value("camera_height", opt.camera_height);
      opt.speed_min = r.value("speed_min", opt.speed_min);
      opt.speed_max = r.value("speed_max", opt.speed_max);
      opt.yaw_rate_max = r.value("yaw_rate_max", opt.yaw_rate_max);
      const int count = r.value("count", 1);
      const auto seed = r.value("seed", std::uint64_t{1});
      for (int i = 0; i < count; ++i) {
        out.push_back(random_street_scene(opt, seed * 1000003ull + static_cast<std::uint64_t>(i)));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("scene spec: ") + e.what());
    }
  }
  if (out.empty()) throw DataError("scene spec: no scenes");
  for (const auto& s : out) {
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("scene spec: ") + e.what());
    }
  }
  return out;
}

}  // namespace geowarp
