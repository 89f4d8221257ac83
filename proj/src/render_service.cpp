#include "persview/render_service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "httplib.h"
#include "json.hpp"

#include "persview/error.hpp"
#include "persview/image_io.hpp"

namespace persview {

namespace fs = std::filesystem;
using nlohmann::json;

HttpReply error_reply(int status, const std::string& code, const std::string& member,
                      const std::string& message) {
  HttpReply r;
  r.status = status;
  r.body = json{{"error", {{"code", code}, {"member", member.empty() ? json(nullptr) : json(member)},
                           {"message", message}}}}
               .dump();
  return r;
}

namespace {

HttpReply from_error(int status, const Error& e) {
  return error_reply(status, std::string(to_string(e.code())), e.member(), e.what());
}

bool safe_member_name(const std::string& name) {
  return !name.empty() && name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
         name != "." && name != "..";
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
      path_ = fs::temp_directory_path() / ("persview-upload-" + std::to_string(rd()));
      if (fs::create_directory(path_)) return;
    }
    throw Error(ErrorCode::IoFailure, "cannot create upload directory");
  }
  ~TempDir() {
    std::error_code ignored;
    fs::remove_all(path_, ignored);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::optional<RenderMode> parse_mode(const std::string& s) {
  if (s == "warped") return RenderMode::Warped;
  if (s == "generated") return RenderMode::Generated;
  if (s == "blended") return RenderMode::Blended;
  if (s == "visibility") return RenderMode::Visibility;
  return std::nullopt;
}

std::optional<double> query_number(const std::multimap<std::string, std::string>& q, const std::string& key,
                                   bool& malformed) {
  const auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size() || !std::isfinite(v)) malformed = true;
    return v;
  } catch (const std::exception&) {
    malformed = true;
    return std::nullopt;
  }
}

}  // namespace

RenderService::RenderService(ServiceOptions options) : options_(std::move(options)) {
  options_.pipeline.validate();
  std::random_device rd;
  id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::size_t RenderService::session_count() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

std::shared_ptr<const RenderService::Session> RenderService::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  return *it->second;
}

HttpReply RenderService::create_session(const std::map<std::string, std::string>& files) {
  if (!files.contains("manifest.json")) {
    return error_reply(400, "MissingManifest", "manifest", "upload has no manifest.json");
  }
  auto session = std::make_shared<Session>();
  try {
    TempDir dir;
    for (const auto& [name, bytes] : files) {
      if (!safe_member_name(name)) {
        return error_reply(400, "CorruptMember", name, "invalid member file name '" + name + "'");
      }
      write_file_atomic(dir.path() / name, bytes);
    }
    session->bundle = load_bundle(dir.path());
    session->scene = prepare_scene(session->bundle, options_.pipeline);
  } catch (const Error& e) {
    return from_error(e.code() == ErrorCode::IoFailure ? 500 : 400, e);
  }

  {
    std::lock_guard lock(mutex_);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx%04llx", static_cast<unsigned long long>(id_salt_),
                  static_cast<unsigned long long>(next_id_++));
    session->id = buf;
    lru_.push_front(session);
    index_[session->id] = lru_.begin();
    while (lru_.size() > std::max<std::size_t>(options_.max_sessions, 1)) {
      index_.erase(lru_.back()->id);
      lru_.pop_back();
    }
  }
  HttpReply r;
  r.status = 201;
  r.body = json{{"id", session->id}}.dump();
  return r;
}

HttpReply RenderService::render(const std::string& id, const std::multimap<std::string, std::string>& query) {
  const auto session = find(id);
  if (!session) return error_reply(404, "UnknownSession", "", "no session '" + id + "'");

  const auto start = std::chrono::steady_clock::now();
  bool malformed = false;
  PipelineConfig cfg = options_.pipeline;
  cfg.view = NovelView{};
  cfg.view.yaw = query_number(query, "yaw", malformed).value_or(0.0);
  cfg.view.pitch = query_number(query, "pitch", malformed).value_or(0.0);
  cfg.view.roll = query_number(query, "roll", malformed).value_or(0.0);
  cfg.view.tz = query_number(query, "tz", malformed);
  if (malformed) return error_reply(422, "InvalidArgument", "", "query parameters must be numbers");

  RenderMode mode = RenderMode::Warped;
  if (const auto it = query.find("mode"); it != query.end()) {
    const auto parsed = parse_mode(it->second);
    if (!parsed) return error_reply(422, "InvalidArgument", "mode", "unknown mode '" + it->second + "'");
    mode = *parsed;
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    return from_error(422, e);
  }
  // Past the culling threshold a frontal surface is culled whole.
  for (const auto& [name, v] : {std::pair{"yaw", cfg.view.yaw}, {"pitch", cfg.view.pitch}}) {
    if (std::abs(v) > cfg.cull_deg) {
      return error_reply(422, "InvalidArgument", name,
                         std::string(name) + " must lie within the culling threshold of " +
                             std::to_string(cfg.cull_deg) + " degrees");
    }
  }
  if ((mode == RenderMode::Blended || mode == RenderMode::Generated) && !session->bundle.generated_image) {
    return error_reply(409, "MissingGenerated", "generated", "session has no generated image");
  }

  try {
    const CameraParams novel = novel_camera(session->bundle.original_camera, session->scene, cfg.view);
    const ViewResult view =
        render_view(session->bundle, session->scene, novel, cfg, mode == RenderMode::Blended);
    HttpReply r;
    r.content_type = "image/png";
    std::vector<unsigned char> png;
    switch (mode) {
      case RenderMode::Warped: png = encode_png(view.render.color); break;
      case RenderMode::Generated: png = encode_png(*session->bundle.generated_image); break;
      case RenderMode::Blended: png = encode_png(*view.blended); break;
      case RenderMode::Visibility: {
        GrayImage g(view.visibility.width, view.visibility.height);
        g.values = view.visibility.weights;
        png = encode_png(g);
        break;
      }
    }
    r.body.assign(png.begin(), png.end());
    char frac[32];
    std::snprintf(frac, sizeof frac, "%.4f", view.visible_fraction);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    char millis[32];
    std::snprintf(millis, sizeof millis, "%.3f", ms);
    r.headers = {{"X-Visible-Fraction", frac}, {"X-Render-Millis", millis}};
    return r;
  } catch (const Error& e) {
    const bool user = e.code() == ErrorCode::EyesBehindCamera || e.code() == ErrorCode::InvalidCamera ||
                      e.code() == ErrorCode::NonPositiveDistance || e.code() == ErrorCode::EmptyMesh;
    return from_error(user ? 422 : 500, e);
  }
}

HttpReply RenderService::meta(const std::string& id) {
  const auto session = find(id);
  if (!session) return error_reply(404, "UnknownSession", "", "no session '" + id + "'");
  json modes = json::array({"warped", "visibility"});
  if (session->bundle.generated_image) {
    modes.push_back("generated");
    modes.push_back("blended");
  }
  HttpReply r;
  r.body = json{{"id", session->id},
                {"camera", camera_to_json(session->bundle.original_camera)},
                {"resolution", {session->bundle.source_image.width, session->bundle.source_image.height}},
                {"modes", modes},
                {"limits",
                 {{"yaw", {-options_.pipeline.cull_deg, options_.pipeline.cull_deg}},
                  {"pitch", {-options_.pipeline.cull_deg, options_.pipeline.cull_deg}},
                  {"roll", {-90, 90}}}}}
               .dump();
  return r;
}

void RenderService::mount(httplib::Server& server) {
  auto send = [this](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
    for (const auto& [k, v] : reply.headers) res.set_header(k, v);
    res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
    res.set_header("Access-Control-Expose-Headers", "X-Visible-Fraction, X-Render-Millis");
  };

  server.Options(R"(/.*)", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });

  server.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send(res, error_reply(400, "CorruptMember", "manifest", "expected a multipart bundle upload"));
      return;
    }
    std::map<std::string, std::string> files;
    for (const auto& [field, part] : req.files) {
      files[part.filename.empty() ? part.name : part.filename] = part.content;
    }
    send(res, create_session(files));
  });

  server.Get(R"(/sessions/([^/]+)/render)", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    send(res, render(req.matches[1], query));
  });

  server.Get(R"(/sessions/([^/]+)/meta)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, meta(req.matches[1]));
  });
}

}  // namespace persview
