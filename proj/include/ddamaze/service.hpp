#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddamaze/dqn.hpp"

namespace ddamaze {

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string checkpoint;  // pretrained agent; empty means look in checkpoint_dir
  std::string checkpoint_dir = "checkpoints";
  std::string profile = "average";
  double serve_epsilon = 0.05;
  std::string cors_origin = "*";
  bool persist = true;  // write a session checkpoint after each rating
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

std::optional<std::string> process_env(const std::string& name);

/// Defaults, then the JSON file (if any), then DDAMAZE_PORT, DDAMAZE_HOST,
/// DDAMAZE_CHECKPOINT, DDAMAZE_CHECKPOINT_DIR and DDAMAZE_PROFILE.
ServiceConfig load_service_config(const std::string& path, const EnvLookup& env = process_env);

/// Agent used to seed new sessions: the configured checkpoint, else
/// <checkpoint_dir>/pretrained_<profile>.json, else an untrained agent.
Agent load_base_agent(const ServiceConfig& config, std::string* source = nullptr);

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

/// Session logic behind the HTTP routes. Every session owns its own copy
/// of the agent; mutations of one session are serialized by its mutex.
class AdaptationService {
 public:
  AdaptationService(Agent base, ServiceConfig config);

  ServiceResponse create_session(const std::optional<std::string>& requested_id = std::nullopt);
  ServiceResponse get_maze(const std::string& session_id);
  ServiceResponse post_rating(const nlohmann::json& body);
  ServiceResponse status(const std::optional<std::string>& session_id) const;

  const ServiceConfig& config() const { return config_; }
  std::size_t session_count() const;

 private:
  struct RatedMaze {
    std::string maze_id;
    int sequence = 0;
    int rating = 0;
  };

  struct Session {
    std::mutex mutex;
    std::string id;
    Agent agent;
    int sequence = 0;  // mazes served so far
    std::optional<Episode> outstanding;
    std::string outstanding_id;
    std::vector<RatedMaze> history;
    std::optional<std::chrono::steady_clock::time_point> saved_at;

    Session(std::string session_id, Agent a) : id(std::move(session_id)), agent(std::move(a)) {}
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> find_or_create(const std::string& id, bool* created);
  std::shared_ptr<Session> restore_or_fresh(const std::string& id);
  std::string checkpoint_path(const std::string& id) const;
  void persist(Session& session);
  nlohmann::ordered_json session_status(const Session& session) const;

  Agent base_;
  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 id_rng_;
};

/// Session ids: 1-64 characters from [A-Za-z0-9_-].
bool valid_session_id(const std::string& id);

/// HTTP front end for AdaptationService.
///   POST /api/v1/session            -> {session}
///   GET  /api/v1/maze?session=ID    -> {session, maze_id, sequence, maze}
///   POST /api/v1/rating             <- {session, maze_id, rating}
///   GET  /api/v1/status[?session=ID]
class HttpServer {
 public:
  explicit HttpServer(AdaptationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  /// bind() followed by run() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ddamaze
