#include "ddamaze/service.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "ddamaze/checkpoint.hpp"

namespace ddamaze {

namespace {

constexpr int kSessionSchemaVersion = 1;

ServiceResponse error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

ServiceConfig load_service_config(const std::string& path, const EnvLookup& env) {
  ServiceConfig config;
  if (!path.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(path));
      config.host = doc.value("host", config.host);
      config.port = doc.value("port", config.port);
      config.checkpoint = doc.value("checkpoint", config.checkpoint);
      config.checkpoint_dir = doc.value("checkpoint_dir", config.checkpoint_dir);
      config.profile = doc.value("profile", config.profile);
      config.serve_epsilon = doc.value("serve_epsilon", config.serve_epsilon);
      config.cors_origin = doc.value("cors_origin", config.cors_origin);
      config.persist = doc.value("persist", config.persist);
    } catch (const nlohmann::json::exception& e) {
      throw ServiceError("bad service config '" + path + "': " + e.what());
    } catch (const CheckpointError& e) {
      throw ServiceError(e.what());
    }
  }
  if (auto v = env("DDAMAZE_HOST")) config.host = *v;
  if (auto v = env("DDAMAZE_PORT")) {
    try {
      config.port = std::stoi(*v);
    } catch (const std::exception&) {
      throw ServiceError("DDAMAZE_PORT is not a number: " + *v);
    }
  }
  if (auto v = env("DDAMAZE_CHECKPOINT")) config.checkpoint = *v;
  if (auto v = env("DDAMAZE_CHECKPOINT_DIR")) config.checkpoint_dir = *v;
  if (auto v = env("DDAMAZE_PROFILE")) config.profile = *v;

  if (config.port < 0 || config.port > 65535) throw ServiceError("port out of range");
  if (!(config.serve_epsilon >= 0.0 && config.serve_epsilon <= 1.0)) {
    throw ServiceError("serve_epsilon must lie in [0, 1]");
  }
  return config;
}

Agent load_base_agent(const ServiceConfig& config, std::string* source) {
  std::string path = config.checkpoint;
  if (path.empty()) {
    const auto candidate = std::filesystem::path(config.checkpoint_dir) / ("pretrained_" + config.profile + ".json");
    if (std::filesystem::exists(candidate)) path = candidate.string();
  }
  if (!path.empty()) {
    if (source) *source = path;
    return load_agent(path);
  }
  if (source) *source = "untrained (" + config.profile + ")";
  return Agent(std::make_shared<const RoomGrid>(default_grid()), load_profile(config.profile), TrainConfig{});
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-';
    if (!ok) return false;
  }
  return true;
}

AdaptationService::AdaptationService(Agent base, ServiceConfig config)
    : base_(std::move(base)), config_(std::move(config)), id_rng_(std::random_device{}()) {}

std::size_t AdaptationService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::string AdaptationService::checkpoint_path(const std::string& id) const {
  return (std::filesystem::path(config_.checkpoint_dir) / ("session_" + id + ".json")).string();
}

std::shared_ptr<AdaptationService::Session> AdaptationService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<AdaptationService::Session> AdaptationService::restore_or_fresh(const std::string& id) {
  const std::string path = checkpoint_path(id);
  if (config_.persist && std::filesystem::exists(path)) {
    const auto doc = nlohmann::json::parse(read_file(path));
    if (doc.at("v").get<int>() != kSessionSchemaVersion) throw CheckpointError("unsupported session version");
    auto session = std::make_shared<Session>(id, agent_from_json(doc.at("agent")));
    session->sequence = doc.at("sequence").get<int>();
    for (const auto& h : doc.at("history")) {
      session->history.push_back(
          {h.at("maze_id").get<std::string>(), h.at("sequence").get<int>(), h.at("rating").get<int>()});
    }
    return session;
  }
  return std::make_shared<Session>(id, base_);
}

std::shared_ptr<AdaptationService::Session> AdaptationService::find_or_create(const std::string& id,
                                                                              bool* created) {
  if (created) *created = false;
  if (auto s = find(id)) return s;
  std::unique_lock lock(sessions_mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  auto session = restore_or_fresh(id);
  sessions_.emplace(id, session);
  if (created) *created = true;
  return session;
}

ServiceResponse AdaptationService::create_session(const std::optional<std::string>& requested_id) {
  std::string id;
  if (requested_id) {
    if (!valid_session_id(*requested_id)) return error_response(400, "invalid session id");
    id = *requested_id;
  } else {
    std::unique_lock lock(sessions_mutex_);
    char buf[17];
    do {
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_()));
      id = buf;
    } while (sessions_.count(id) != 0);
  }
  bool created = false;
  try {
    auto session = find_or_create(id, &created);
    std::lock_guard lock(session->mutex);
    auto body = session_status(*session);
    return {created ? 201 : 200, std::move(body)};
  } catch (const std::exception& e) {
    return error_response(500, std::string("cannot create session: ") + e.what());
  }
}

ServiceResponse AdaptationService::get_maze(const std::string& session_id) {
  if (!valid_session_id(session_id)) return error_response(400, "missing or invalid session id");
  try {
    auto session = find_or_create(session_id, nullptr);
    std::lock_guard lock(session->mutex);
    if (!session->outstanding) {
      Episode episode = session->agent.build_maze(config_.serve_epsilon);
      session->sequence += 1;
      session->outstanding_id = session->id + "-" + std::to_string(session->sequence);
      session->outstanding = std::move(episode);
    }
    nlohmann::ordered_json body;
    body["session"] = session->id;
    body["maze_id"] = session->outstanding_id;
    body["sequence"] = session->sequence;
    body["maze"] = maze_to_json_value(session->outstanding->maze);
    return {200, std::move(body)};
  } catch (const std::exception& e) {
    return error_response(500, std::string("maze generation failed: ") + e.what());
  }
}

ServiceResponse AdaptationService::post_rating(const nlohmann::json& body) {
  if (!body.is_object()) return error_response(400, "expected a JSON object");
  const auto session_it = body.find("session");
  const auto maze_it = body.find("maze_id");
  const auto rating_it = body.find("rating");
  if (session_it == body.end() || !session_it->is_string()) return error_response(400, "missing session");
  if (maze_it == body.end() || !maze_it->is_string()) return error_response(400, "missing maze_id");
  if (rating_it == body.end() || !rating_it->is_number()) return error_response(422, "rating must be a number 1..5");
  const double raw = rating_it->get<double>();
  if (!(raw >= 1.0 && raw <= 5.0) || raw != std::floor(raw)) {
    return error_response(422, "rating must be an integer from 1 to 5");
  }
  const int rating = static_cast<int>(raw);
  const auto session_id = session_it->get<std::string>();
  const auto maze_id = maze_it->get<std::string>();

  auto session = find(session_id);
  if (!session) return error_response(404, "unknown session");
  std::lock_guard lock(session->mutex);
  for (const auto& h : session->history) {
    if (h.maze_id == maze_id) return error_response(409, "maze already rated");
  }
  if (!session->outstanding || session->outstanding_id != maze_id) return error_response(404, "unknown maze_id");

  try {
    Episode episode = std::move(*session->outstanding);
    session->outstanding.reset();
    session->agent.online_update(episode, rating);
    session->history.push_back({maze_id, session->sequence, rating});
    session->outstanding_id.clear();
    if (config_.persist) persist(*session);
  } catch (const std::exception& e) {
    return error_response(500, std::string("update failed: ") + e.what());
  }
  return {200, {{"accepted", true}, {"next_available", true}}};
}

void AdaptationService::persist(Session& session) {
  nlohmann::ordered_json doc;
  doc["v"] = kSessionSchemaVersion;
  doc["session"] = session.id;
  doc["sequence"] = session.sequence;
  auto history = nlohmann::ordered_json::array();
  for (const auto& h : session.history) {
    history.push_back({{"maze_id", h.maze_id}, {"sequence", h.sequence}, {"rating", h.rating}});
  }
  doc["history"] = std::move(history);
  doc["agent"] = agent_to_json(session.agent);
  write_file_atomic(checkpoint_path(session.id), doc.dump());
  session.saved_at = std::chrono::steady_clock::now();
}

nlohmann::ordered_json AdaptationService::session_status(const Session& session) const {
  nlohmann::ordered_json body;
  body["session"] = session.id;
  body["mazes_served"] = session.sequence;
  auto ratings = nlohmann::ordered_json::array();
  double err = 0.0;
  for (const auto& h : session.history) {
    ratings.push_back(h.rating);
    err += std::abs(h.rating - base_.config().target_rating);
  }
  body["ratings"] = std::move(ratings);
  body["mean_abs_error"] =
      session.history.empty() ? nlohmann::ordered_json(nullptr)
                              : nlohmann::ordered_json(err / static_cast<double>(session.history.size()));
  body["checkpoint_age"] =
      session.saved_at ? nlohmann::ordered_json(seconds_since(*session.saved_at)) : nlohmann::ordered_json(nullptr);
  body["outstanding"] = session.outstanding ? nlohmann::ordered_json(session.outstanding_id)
                                            : nlohmann::ordered_json(nullptr);
  return body;
}

ServiceResponse AdaptationService::status(const std::optional<std::string>& session_id) const {
  if (session_id) {
    auto session = find(*session_id);
    if (!session) return error_response(404, "unknown session");
    std::lock_guard lock(session->mutex);
    return {200, session_status(*session)};
  }
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  int served = 0;
  std::size_t rated = 0;
  double err = 0.0;
  std::optional<double> age;
  auto ratings = nlohmann::ordered_json::array();
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    served += s->sequence;
    for (const auto& h : s->history) {
      ratings.push_back(h.rating);
      err += std::abs(h.rating - base_.config().target_rating);
      ++rated;
    }
    if (s->saved_at) {
      const double a = seconds_since(*s->saved_at);
      age = age ? std::min(*age, a) : a;
    }
  }
  nlohmann::ordered_json body;
  body["sessions"] = all.size();
  body["mazes_served"] = served;
  body["ratings"] = std::move(ratings);
  body["mean_abs_error"] =
      rated == 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(err / static_cast<double>(rated));
  body["checkpoint_age"] = age ? nlohmann::ordered_json(*age) : nlohmann::ordered_json(nullptr);
  return {200, std::move(body)};
}

struct HttpServer::Impl {
  AdaptationService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(AdaptationService& s) : service(s) {
    const std::string origin = service.config().cors_origin;
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});

    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto session_param = [](const httplib::Request& req) -> std::optional<std::string> {
      if (req.has_param("session")) return req.get_param_value("session");
      return std::nullopt;
    };

    server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Post("/api/v1/session", [this, reply](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> id;
      if (!req.body.empty()) {
        const auto doc = nlohmann::json::parse(req.body, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) return reply(res, error_response(400, "malformed JSON"));
        if (auto it = doc.find("session"); it != doc.end() && it->is_string()) id = it->get<std::string>();
      }
      reply(res, service.create_session(id));
    });

    server.Get("/api/v1/maze", [this, reply, session_param](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_maze(session_param(req).value_or("")));
    });

    server.Post("/api/v1/rating", [this, reply](const httplib::Request& req, httplib::Response& res) {
      const auto doc = nlohmann::json::parse(req.body, nullptr, false);
      if (doc.is_discarded()) return reply(res, error_response(400, "malformed JSON"));
      reply(res, service.post_rating(doc));
    });

    server.Get("/api/v1/status", [this, reply, session_param](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.status(session_param(req)));
    });

    server.set_error_handler([reply](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, error_response(res.status, "not found"));
    });
  }
};

HttpServer::HttpServer(AdaptationService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw ServiceError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw ServiceError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ddamaze
