#include "geowarp/service.hpp"

#include "geowarp/dataset.hpp"
#include "geowarp/errors.hpp"

#include <httplib.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace geowarp {
namespace {

using nlohmann::json;

ServiceResponse error(int status, const std::string& code, const std::string& message) {
  return {status, {{"version", 1}, {"code", code}, {"message", message}}};
}

std::string png_base64(const Image& image) { return base64_encode(encode_png(image)); }

}  // namespace

Image depth_colormap(const DepthMap& depth, double near) {
  Image out(depth.width, depth.height, 3, 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    std::uint8_t* p = out.pixels.data() + i * 3;
    if (!depth.mask[i]) {
      p[0] = p[1] = p[2] = kColormapGap;
      continue;
    }
    const double t = std::min(1.0, near / depth.values[i]);
    p[0] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return out;
}

double colormap_depth(const std::uint8_t* rgb, double near) {
  if (rgb[1] != 0 || rgb[2] != 0) return std::numeric_limits<double>::quiet_NaN();
  if (rgb[0] == 0) return std::numeric_limits<double>::infinity();
  return near * 255.0 / rgb[0];
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        v[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (v[j] = value(c)) < 0) throw std::invalid_argument("base64: invalid character");
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(v[0]) << 18) | (static_cast<std::uint32_t>(v[1]) << 12) |
                            (static_cast<std::uint32_t>(v[2]) << 6) | static_cast<std::uint32_t>(v[3]);
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

json motion_to_json(const EgoMotion& m) {
  return {{"t_x", m.t_x}, {"t_y", m.t_y}, {"t_z", m.t_z}, {"r_x", m.r_x}, {"r_y", m.r_y}, {"r_z", m.r_z}};
}

EgoMotion motion_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("motion must be a JSON object");
  auto get = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw std::invalid_argument(std::string("motion field '") + key + "' must be a number");
    }
    const double v = j.at(key).get<double>();
    if (!std::isfinite(v)) throw std::invalid_argument(std::string("motion field '") + key + "' is not finite");
    return v;
  };
  return {get("t_x"), get("t_y"), get("t_z"), get("r_x"), get("r_y"), get("r_z")};
}

std::vector<ServiceFrame> load_service_frames(const std::filesystem::path& root) {
  std::vector<ServiceFrame> out;
  for (const auto& dir : list_videos(root)) {
    const Video video = read_video(dir);
    const std::string name = dir == root ? dir.filename().string() : std::filesystem::relative(dir, root).string();
    for (std::size_t i = 0; i < video.frames.size(); ++i) {
      out.push_back({name + "/" + frame_stem(i), video.frames[i].rgb, video.frames[i].depth, video.intrinsics});
    }
  }
  if (out.empty()) throw DataError("no frames under " + root.string());
  return out;
}

ExplorerService::ExplorerService(std::vector<ServiceFrame> frames, SplatConfig splat)
    : frames_(std::move(frames)), splat_(splat) {
  if (frames_.empty()) throw std::invalid_argument("explorer service needs at least one frame");
  splat_.validate();
}

ServiceResponse ExplorerService::list_frames() const {
  json list = json::array();
  for (const auto& f : frames_) {
    list.push_back({{"id", f.id}, {"width", f.rgb.width}, {"height", f.rgb.height}});
  }
  return {200, {{"version", 1}, {"frames", list}}};
}

std::shared_ptr<ExplorerService::Session> ExplorerService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

json ExplorerService::render(const Session& s) const {
  const FramePrediction p =
      warp_forward(s.frame->rgb, s.frame->depth, s.accumulated.inverse(), s.frame->intrinsics, splat_);
  return {{"rgb", png_base64(p.rgb)},
          {"depth", png_base64(depth_colormap(p.depth))},
          {"coverage", p.coverage_fraction()}};
}

json ExplorerService::state_json(const std::string& id, const Session& s) {
  json history = json::array();
  for (const auto& m : s.history) history.push_back(motion_to_json(m));
  return {{"version", 1},
          {"session", id},
          {"frame", s.frame->id},
          {"accumulated", motion_to_json(EgoMotion::from_transform(s.accumulated))},
          {"history", history}};
}

ServiceResponse ExplorerService::create_session(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "bad_request", "body is not valid JSON");
  }
  if (!j.is_object() || !j.contains("frame") || !j.at("frame").is_string()) {
    return error(400, "bad_request", "expected {\"frame\": \"<frame id>\"}");
  }
  const std::string frame_id = j.at("frame").get<std::string>();
  const ServiceFrame* frame = nullptr;
  for (const auto& f : frames_)
    if (f.id == frame_id) frame = &f;
  if (!frame) return error(404, "not_found", "unknown frame '" + frame_id + "'");

  auto session = std::make_shared<Session>();
  session->frame = frame;
  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    id = "s" + std::to_string(next_id_++);
    sessions_[id] = session;
  }
  std::lock_guard lock(session->mutex);
  json out = render(*session);
  out["version"] = 1;
  out["session"] = id;
  out["frame"] = frame->id;
  return {200, out};
}

ServiceResponse ExplorerService::apply_motion(const std::string& id, const std::string& body) {
  auto session = find(id);
  if (!session) return error(404, "not_found", "unknown session '" + id + "'");
  EgoMotion m;
  try {
    m = motion_from_json(json::parse(body));
  } catch (const json::exception&) {
    return error(400, "bad_request", "body is not valid JSON");
  } catch (const std::invalid_argument& e) {
    return error(400, "bad_request", e.what());
  }
  std::lock_guard lock(session->mutex);
  const RigidTransform before = session->accumulated;
  session->accumulated = before * m.to_transform();
  try {
    json out = render(*session);
    const json st = state_json(id, *session);
    out["version"] = 1;
    out["session"] = id;
    out["accumulated"] = st.at("accumulated");
    out["history_length"] = session->history.size() + 1;
    session->history.push_back(m);
    return {200, out};
  } catch (const std::exception& e) {
    session->accumulated = before;
    return error(500, "numeric_error", e.what());
  }
}

ServiceResponse ExplorerService::reset(const std::string& id) {
  auto session = find(id);
  if (!session) return error(404, "not_found", "unknown session '" + id + "'");
  std::lock_guard lock(session->mutex);
  session->accumulated = RigidTransform::identity();
  session->history.clear();
  json out = render(*session);
  out["version"] = 1;
  out["session"] = id;
  return {200, out};
}

ServiceResponse ExplorerService::state(const std::string& id) const {
  auto session = find(id);
  if (!session) return error(404, "not_found", "unknown session '" + id + "'");
  std::lock_guard lock(session->mutex);
  try {
    return {200, state_json(id, *session)};
  } catch (const std::exception& e) {
    return error(500, "numeric_error", e.what());
  }
}

struct HttpServer::Impl {
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(ExplorerService& service) : impl_(std::make_unique<Impl>()) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto& s = impl_->server;
  s.Get("/frames", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.list_frames());
  });
  s.Post("/session", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  s.Post(R"(/session/([^/]+)/motion)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.apply_motion(req.matches[1], req.body));
  });
  s.Post(R"(/session/([^/]+)/reset)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.reset(req.matches[1]));
  });
  s.Get(R"(/session/([^/]+)/state)", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.state(req.matches[1]));
  });
  s.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, error(500, "internal_error", what));
  });
  s.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string code = res.status == 404 ? "not_found" : "http_error";
      reply(res, error(res.status, code, "no route for " + req.method + " " + req.path));
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace geowarp
