#pragma once

// On-disk dataset layout, one directory per video:
//
//   <video>/frames/NNNNNN.png    8-bit RGB
//   <video>/depth/NNNNNN.dmap    DMAP depth (see below)
//   <video>/poses.csv            frame,x,y,z,yaw,pitch,roll
//   <video>/intrinsics.json      {"version":1,"fx","fy","cx","cy","width","height"}
//
// DMAP is little-endian: magic "DMAP", u32 width, u32 height, f32 depth
// row-major, u8 mask row-major.

#include "geowarp/depth_data.hpp"
#include "geowarp/geometry.hpp"
#include "geowarp/synthetic.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace geowarp {

struct Video {
  CameraIntrinsics intrinsics;
  std::vector<Frame> frames;
};

std::vector<std::uint8_t> encode_dmap(const DepthMap& depth);
DepthMap decode_dmap(const std::vector<std::uint8_t>& bytes);
void write_dmap(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_dmap(const std::filesystem::path& path);

nlohmann::json intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);

void write_poses_csv(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses_csv(const std::filesystem::path& path);

std::string frame_stem(std::size_t index);  // "000042"

void write_video(const std::filesystem::path& dir, const Video& video);
// Throws DataError when the layout is incomplete or inconsistent.
Video read_video(const std::filesystem::path& dir);

// Every subdirectory of root containing poses.csv, in lexicographic order.
// root itself counts when it is a video directory.
std::vector<std::filesystem::path> list_videos(const std::filesystem::path& root);

struct SequenceDataset {
  CameraIntrinsics intrinsics;
  std::vector<SequenceRecord> sequences;
};

// Loads every video under root and cuts it into k-frame windows.
SequenceDataset load_sequences(const std::filesystem::path& root, int k, int stride = 0);

// Scene spec JSON. A document holds "intrinsics" plus either explicit
// "scenes" or a "random" street-scene generator block (or both).
nlohmann::json scene_to_json(const SyntheticSceneSpec& scene);
SyntheticSceneSpec scene_from_json(const nlohmann::json& j, const CameraIntrinsics& k);
std::vector<SyntheticSceneSpec> scenes_from_document(const nlohmann::json& doc);

}  // namespace geowarp
