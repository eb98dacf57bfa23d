#pragma once

// Hypothetical-motion explorer backend.
//
// Motions on the wire describe the camera: {t_x, t_y, t_z} in metres and
// {r_x, r_y, r_z} in radians, parametrised like EgoMotion, with +t_z moving
// the camera forward. A session keeps the accumulated camera motion
// A = M_1 * M_2 * ... * M_n and always warps its original frame with the
// point transform A^-1.
//
// Depth colormap: valid pixels are (round(255 * min(1, near / d)), 0, 0),
// gaps are (64, 64, 64).

#include "geowarp/geometry.hpp"
#include "geowarp/image.hpp"
#include "geowarp/synthesis.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace geowarp {

inline constexpr double kColormapNear = 3.0;
inline constexpr std::uint8_t kColormapGap = 64;

Image depth_colormap(const DepthMap& depth, double near = kColormapNear);
// Depth encoded by one colormap pixel; NaN for a gap, +infinity for red 0.
double colormap_depth(const std::uint8_t* rgb, double near = kColormapNear);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json motion_to_json(const EgoMotion& m);
// Throws std::invalid_argument unless all six components are finite numbers.
EgoMotion motion_from_json(const nlohmann::json& j);

struct ServiceFrame {
  std::string id;
  Image rgb;
  DepthMap depth;
  CameraIntrinsics intrinsics;
};

// Frames of every video under root, with ids "<video>/<NNNNNN>".
std::vector<ServiceFrame> load_service_frames(const std::filesystem::path& root);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class ExplorerService {
 public:
  explicit ExplorerService(std::vector<ServiceFrame> frames, SplatConfig splat = {});

  ServiceResponse list_frames() const;
  ServiceResponse create_session(const std::string& body);
  ServiceResponse apply_motion(const std::string& session, const std::string& body);
  ServiceResponse reset(const std::string& session);
  ServiceResponse state(const std::string& session) const;

 private:
  struct Session {
    mutable std::mutex mutex;
    const ServiceFrame* frame = nullptr;
    RigidTransform accumulated;  // camera motion
    std::vector<EgoMotion> history;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json render(const Session& s) const;
  static nlohmann::json state_json(const std::string& id, const Session& s);

  std::vector<ServiceFrame> frames_;
  SplatConfig splat_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  unsigned long next_id_ = 1;
};

// HTTP front end over an ExplorerService.
class HttpServer {
 public:
  explicit HttpServer(ExplorerService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws DataError on
  // failure.
  int bind(const std::string& host, int port);
  void run();   // blocks until stop()
  void start(); // runs on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace geowarp
