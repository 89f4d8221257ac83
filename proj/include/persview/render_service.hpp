#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "persview/pipeline.hpp"
#include "persview/session_io.hpp"

namespace httplib {
class Server;
}

namespace persview {

struct ServiceOptions {
  std::size_t max_sessions = 16;
  std::string cors_origin = "*";
  PipelineConfig pipeline;
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

enum class RenderMode { Warped, Generated, Blended, Visibility };

// Session store plus request handlers. Handlers are independent of the HTTP
// transport so they can be exercised directly; mount() wires them to a server.
class RenderService {
 public:
  explicit RenderService(ServiceOptions options = {});

  // `files` maps member file names (including manifest.json) to contents.
  HttpReply create_session(const std::map<std::string, std::string>& files);
  HttpReply render(const std::string& id, const std::multimap<std::string, std::string>& query);
  HttpReply meta(const std::string& id);

  void mount(httplib::Server& server);
  std::size_t session_count() const;

 private:
  struct Session {
    std::string id;
    SessionBundle bundle;
    PreparedScene scene;
  };

  std::shared_ptr<const Session> find(const std::string& id);

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::list<std::shared_ptr<const Session>> lru_;  // most recent first
  std::unordered_map<std::string, std::list<std::shared_ptr<const Session>>::iterator> index_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_ = 0;
};

HttpReply error_reply(int status, const std::string& code, const std::string& member,
                      const std::string& message);

}  // namespace persview
