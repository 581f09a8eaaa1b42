#include "ddamaze/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace ddamaze {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

constexpr std::uint64_t kNetSeedSalt = 0x6E65747765726BULL;
constexpr std::uint64_t kDifficultySeedSalt = 0x646966666963ULL;
constexpr std::uint64_t kAgentRngSalt = 0x6167656E74ULL;

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw AgentError("gamma must lie in [0, 1]");
  if (!(target_rating >= 1.0 && target_rating <= 5.0)) {
    throw AgentError("target rating must lie in [1, 5]");
  }
  if (batch_size < 1) throw AgentError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw AgentError("learning rate must be positive");
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0) {
    throw AgentError("epsilon bounds must lie in [0, 1]");
  }
  if (epsilon_decay_episodes < 0) throw AgentError("epsilon decay must be non-negative");
  if (sync_interval < 1) throw AgentError("sync interval must be positive");
  if (pretrain_episodes < 0) throw AgentError("pretrain episodes must be non-negative");
  if (difficulty_runs < 1) throw AgentError("difficulty runs must be positive");
  if (replay_capacity < 1) throw AgentError("replay capacity must be positive");
  if (online_steps < 0) throw AgentError("online steps must be non-negative");
}

double TrainConfig::epsilon_at(int episode) const {
  if (epsilon_decay_episodes == 0 || episode >= epsilon_decay_episodes) return epsilon_end;
  const double frac = static_cast<double>(episode) / epsilon_decay_episodes;
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json doc;
  doc["target_rating"] = c.target_rating;
  doc["gamma"] = c.gamma;
  doc["batch_size"] = c.batch_size;
  doc["learning_rate"] = c.learning_rate;
  doc["epsilon_start"] = c.epsilon_start;
  doc["epsilon_end"] = c.epsilon_end;
  doc["epsilon_decay_episodes"] = c.epsilon_decay_episodes;
  doc["sync_interval"] = c.sync_interval;
  doc["pretrain_episodes"] = c.pretrain_episodes;
  doc["difficulty_runs"] = c.difficulty_runs;
  doc["replay_capacity"] = c.replay_capacity;
  doc["online_steps"] = c.online_steps;
  doc["seed"] = c.seed;
  doc["network"] = shape_to_json(c.network);
  return doc;
}

TrainConfig config_from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.target_rating = doc.at("target_rating").get<double>();
  c.gamma = doc.at("gamma").get<double>();
  c.batch_size = doc.at("batch_size").get<int>();
  c.learning_rate = doc.at("learning_rate").get<double>();
  c.epsilon_start = doc.at("epsilon_start").get<double>();
  c.epsilon_end = doc.at("epsilon_end").get<double>();
  c.epsilon_decay_episodes = doc.at("epsilon_decay_episodes").get<int>();
  c.sync_interval = doc.at("sync_interval").get<int>();
  c.pretrain_episodes = doc.at("pretrain_episodes").get<int>();
  c.difficulty_runs = doc.at("difficulty_runs").get<int>();
  c.replay_capacity = doc.at("replay_capacity").get<int>();
  c.online_steps = doc.at("online_steps").get<int>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.network = shape_from_json(doc.at("network"));
  c.validate();
  return c;
}

double terminal_reward(int rating, double target_rating) {
  return -std::abs(target_rating - static_cast<double>(rating));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw AgentError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

ReplayBuffer ReplayBuffer::restore(std::size_t capacity, std::size_t head,
                                   std::vector<Transition> slots) {
  ReplayBuffer buffer(capacity);
  if (slots.size() > capacity) throw AgentError("replay contents exceed capacity");
  if (head != 0 && (slots.size() < capacity || head >= capacity)) {
    throw AgentError("replay head inconsistent with contents");
  }
  buffer.head_ = head;
  buffer.items_ = std::move(slots);
  return buffer;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw AgentError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw AgentError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
  return out;
}

DifficultyModel::DifficultyModel(PlayerProfile profile, int runs, std::uint64_t seed)
    : profile_(std::move(profile)), runs_(runs), seed_(seed) {
  profile_.validate();
  if (runs < 1) throw AgentError("difficulty runs must be positive");
}

std::size_t DifficultyModel::KeyHash::operator()(const std::vector<int>& key) const {
  std::uint64_t h = 0x12345678ULL;
  for (int a : key) h = splitmix64(h ^ static_cast<std::uint64_t>(a + 1));
  return static_cast<std::size_t>(h);
}

std::uint64_t DifficultyModel::seed_for(const Maze& maze) const {
  std::uint64_t h = splitmix64(seed_);
  const int n = maze.grid().room_count();
  for (const auto& a : maze.history()) h = splitmix64(h ^ static_cast<std::uint64_t>(a.index(n) + 1));
  return h;
}

DifficultyEstimate DifficultyModel::estimate(const Maze& maze) const {
  return estimate_difficulty(maze, profile_, runs_, seed_for(maze));
}

double DifficultyModel::operator()(const Maze& maze) {
  std::vector<int> key;
  key.reserve(maze.history().size());
  const int n = maze.grid().room_count();
  for (const auto& a : maze.history()) key.push_back(a.index(n));
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const double d = estimate(maze).mean_rating / 5.0;
  cache_.emplace(std::move(key), d);
  return d;
}

int masked_argmax(std::span<const double> q, const std::vector<bool>& legal_mask) {
  int best = -1;
  for (std::size_t i = 0; i < q.size() && i < legal_mask.size(); ++i) {
    if (!legal_mask[i]) continue;
    if (best < 0 || q[i] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  if (best < 0) throw AgentError("no legal action");
  return best;
}

int select_action(const QNetwork& net, const StateEncoding& state, const std::vector<bool>& legal_mask,
                  double epsilon, Rng& rng) {
  std::vector<int> legal;
  for (std::size_t i = 0; i < legal_mask.size(); ++i) {
    if (legal_mask[i]) legal.push_back(static_cast<int>(i));
  }
  if (legal.empty()) throw AgentError("no legal action");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
    return legal[pick(rng)];
  }
  const auto q = net.forward(state);
  return masked_argmax(q, legal_mask);
}

std::vector<double> q_targets(const QNetwork& target_net, std::span<const Transition* const> batch,
                              double gamma) {
  if (batch.empty()) throw AgentError("empty batch");
  std::vector<double> y(batch.size());
  std::vector<const StateEncoding*> next_states;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i]->reward;
    if (!batch[i]->terminal) {
      next_states.push_back(&batch[i]->next_state);
      slots.push_back(i);
    }
  }
  if (next_states.empty()) return y;
  const auto q = target_net.forward_batch(next_states);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& t = *batch[slots[k]];
    const int a = masked_argmax(q[k], t.legal_mask_next);
    y[slots[k]] += gamma * q[k][static_cast<std::size_t>(a)];
  }
  return y;
}

void backfill_rating(Episode& episode, int rating, double target_rating) {
  if (rating < 1 || rating > 5) throw AgentError("rating must be an integer in 1..5");
  if (episode.transitions.empty()) throw AgentError("episode has no transitions");
  episode.rating = rating;
  episode.transitions.back().reward = terminal_reward(rating, target_rating);
}

Episode build_maze(const QNetwork& net, std::shared_ptr<const RoomGrid> grid, DifficultyModel& difficulty,
                   double epsilon, Rng& rng) {
  Maze maze = Maze::create(std::move(grid));
  const int n = maze.grid().room_count();
  StateEncoding state = encode_state(maze, difficulty(maze));
  Episode episode{maze, {}, std::nullopt};
  while (!maze.terminal()) {
    const auto mask = maze.legal_mask();
    const int action = select_action(net, state, mask, epsilon, rng);
    Maze next = maze.apply_index(action);

    Transition t;
    for (const auto& a : maze.history()) t.prefix.push_back(a.index(n));
    t.state = std::move(state);
    t.action = action;
    t.terminal = next.terminal();
    if (t.terminal) {
      t.legal_mask_next.assign(static_cast<std::size_t>(n) + 1, false);
    } else {
      t.next_state = encode_state(next, difficulty(next));
      t.legal_mask_next = next.legal_mask();
      state = t.next_state;
    }
    episode.transitions.push_back(std::move(t));
    maze = std::move(next);
  }
  episode.maze = std::move(maze);
  return episode;
}

Episode generate_episode(const QNetwork& net, std::shared_ptr<const RoomGrid> grid,
                         const PlayerProfile& rater, DifficultyModel& difficulty, double epsilon,
                         const TrainConfig& config, Rng& rng) {
  Episode episode = build_maze(net, std::move(grid), difficulty, epsilon, rng);
  const auto walk = traverse(episode.maze, rater, rng());
  backfill_rating(episode, rate(walk, rater), config.target_rating);
  return episode;
}

Agent::Agent(std::shared_ptr<const RoomGrid> grid, PlayerProfile sim_profile, TrainConfig config)
    : grid_(std::move(grid)),
      config_(std::move(config)),
      buffer_(static_cast<std::size_t>(std::max(config_.replay_capacity, 1))),
      rng_(splitmix64(config_.seed ^ kAgentRngSalt)),
      difficulty_(std::move(sim_profile), config_.difficulty_runs,
                  splitmix64(config_.seed ^ kDifficultySeedSalt)) {
  config_.validate();
  if (!grid_) throw AgentError("null grid");
  const auto report = validate_grid(*grid_);
  if (!report.ok()) throw AgentError("invalid grid:\n" + report.to_string());
  if (config_.network.height != grid_->height || config_.network.width != grid_->width ||
      config_.network.rooms != grid_->room_count()) {
    throw AgentError("network shape does not match the grid");
  }
  net_ = QNetwork::initialized(config_.network, splitmix64(config_.seed ^ kNetSeedSalt));
  target_net_ = net_;
  adam_ = make_adam_state(config_.network);
}

void Agent::after_gradient_step() {
  ++gradient_steps_;
  if (gradient_steps_ % config_.sync_interval == 0) target_net_ = net_;
}

double Agent::train_on(std::span<const Transition* const> batch) {
  const auto targets = q_targets(target_net_, batch, config_.gamma);
  std::vector<Sample> samples;
  samples.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    samples.push_back({&batch[i]->state, batch[i]->action, targets[i]});
  }
  const double loss = loss_and_gradients(net_, samples, gradients_);
  adam_step(net_.params(), gradients_, adam_, config_.learning_rate);
  after_gradient_step();
  return loss;
}

double Agent::train_step() {
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  if (buffer_.size() < batch_size) {
    throw AgentError("replay buffer holds " + std::to_string(buffer_.size()) +
                     " transitions; a batch needs " + std::to_string(batch_size));
  }
  const auto batch = buffer_.sample(batch_size, rng_);
  return train_on(batch);
}

Episode Agent::build_maze(double epsilon) {
  return ddamaze::build_maze(net_, grid_, difficulty_, epsilon, rng_);
}

Episode Agent::generate_episode(const PlayerProfile& rater, double epsilon) {
  return ddamaze::generate_episode(net_, grid_, rater, difficulty_, epsilon, config_, rng_);
}

double Agent::online_update(Episode& episode, int rating) {
  backfill_rating(episode, rating, config_.target_rating);
  for (const auto& t : episode.transitions) buffer_.push(t);
  if (config_.online_steps == 0) return 0.0;

  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  const std::size_t fresh = std::min(episode.transitions.size(), batch_size);
  double loss_sum = 0.0;
  for (int k = 0; k < config_.online_steps; ++k) {
    std::vector<const Transition*> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < fresh; ++i) batch.push_back(&episode.transitions[i]);
    if (batch_size > fresh) {
      const auto rest = buffer_.sample(batch_size - fresh, rng_);
      batch.insert(batch.end(), rest.begin(), rest.end());
    }
    loss_sum += train_on(batch);
  }
  return loss_sum / config_.online_steps;
}

std::string metrics_csv_header() { return "episode,rating,abs_error,epsilon,loss"; }

std::string metrics_csv_row(const EpisodeMetrics& m) {
  char buf[160];
  if (m.loss) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.10g", m.episode, m.rating, m.abs_error,
                  m.epsilon, *m.loss);
  } else {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,", m.episode, m.rating, m.abs_error, m.epsilon);
  }
  return buf;
}

void write_metrics_csv(const std::string& path, std::span<const EpisodeMetrics> metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AgentError("cannot write metrics file '" + path + "'");
  out << metrics_csv_header() << '\n';
  for (const auto& m : metrics) out << metrics_csv_row(m) << '\n';
  if (!out) throw AgentError("failed writing metrics file '" + path + "'");
}

std::vector<EpisodeMetrics> continue_training(Agent& agent, const PlayerProfile& rater, int episodes,
                                              const MetricsCallback& on_episode) {
  std::vector<EpisodeMetrics> metrics;
  metrics.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  const auto batch_size = static_cast<std::size_t>(agent.config().batch_size);
  for (int i = 0; i < episodes; ++i) {
    const int index = agent.episodes();
    const double epsilon = agent.config().epsilon_at(index);
    auto episode = agent.generate_episode(rater, epsilon);
    for (auto& t : episode.transitions) agent.buffer().push(std::move(t));

    EpisodeMetrics m;
    m.episode = index;
    m.rating = *episode.rating;
    m.abs_error = std::abs(static_cast<double>(m.rating) - agent.config().target_rating);
    m.epsilon = epsilon;
    if (agent.buffer().size() >= batch_size) m.loss = agent.train_step();
    agent.set_episodes(index + 1);
    if (on_episode) on_episode(m);
    metrics.push_back(m);
  }
  return metrics;
}

PretrainResult pretrain(std::shared_ptr<const RoomGrid> grid, const PlayerProfile& profile,
                        const TrainConfig& config, const MetricsCallback& on_episode) {
  PretrainResult result{Agent(std::move(grid), profile, config), {}};
  result.metrics = continue_training(result.agent, profile, config.pretrain_episodes, on_episode);
  return result;
}

EvaluationResult evaluate(Agent& agent, const PlayerProfile& rater, int n_mazes, double epsilon,
                          std::uint64_t seed) {
  if (n_mazes < 1) throw AgentError("evaluation needs at least one maze");
  Rng rng(seed);
  EvaluationResult out;
  double err = 0.0, rating_sum = 0.0, passes = 0.0, rooms = 0.0;
  for (int i = 0; i < n_mazes; ++i) {
    auto episode = ddamaze::build_maze(agent.net(), agent.grid_ptr(), agent.difficulty(), epsilon, rng);
    const auto walk = traverse(episode.maze, rater, rng());
    const int r = rate(walk, rater);
    out.ratings.push_back(r);
    err += std::abs(static_cast<double>(r) - agent.config().target_rating);
    rating_sum += r;
    for (const auto& p : walk.room_passes) passes += p.count;
    rooms += static_cast<double>(episode.maze.connected().size());
  }
  const double n = n_mazes;
  out.mean_abs_error = err / n;
  out.mean_rating = rating_sum / n;
  out.mean_room_passes = passes / n;
  out.mean_rooms_connected = rooms / n;
  return out;
}

}  // namespace ddamaze
