#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ddamaze/maze.hpp"
#include "ddamaze/nn.hpp"
#include "ddamaze/sim.hpp"

namespace ddamaze {

class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Seed scrambler used to derive independent streams from one master seed.
std::uint64_t splitmix64(std::uint64_t x);

struct TrainConfig {
  double target_rating = 3.0;
  double gamma = 0.9;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_episodes = 10000;
  int sync_interval = 1000;  // gradient steps between target-network syncs
  int pretrain_episodes = 20000;
  int difficulty_runs = 200;  // simulated walks per intermediate-maze estimate
  int replay_capacity = 50000;
  int online_steps = 50;  // gradient steps per human rating
  std::uint64_t seed = 1;
  NetworkShape network;

  void validate() const;
  /// Linear schedule from epsilon_start to epsilon_end over the decay episodes.
  double epsilon_at(int episode) const;
};

nlohmann::ordered_json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& doc);

struct Transition {
  std::vector<int> prefix;  // action indices applied before `action`
  StateEncoding state;
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
  StateEncoding next_state;          // empty when terminal
  std::vector<bool> legal_mask_next;  // all false when terminal

  bool operator==(const Transition&) const = default;
};

/// Terminal reward for a 1..5 rating: -|target - rating|.
double terminal_reward(int rating, double target_rating);

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  /// Oldest-first access.
  const Transition& at(std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

  /// Storage order and write position, for serialization.
  const std::vector<Transition>& slots() const { return items_; }
  std::size_t head() const { return head_; }
  static ReplayBuffer restore(std::size_t capacity, std::size_t head, std::vector<Transition> slots);

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot overwritten next once full
  std::vector<Transition> items_;
};

/// Simulation-based difficulty of intermediate mazes, mean_rating / 5.
/// Walk seeds derive from the maze's action history, so the value is a pure
/// function of the maze and results can be cached.
class DifficultyModel {
 public:
  DifficultyModel(PlayerProfile profile, int runs, std::uint64_t seed);

  double operator()(const Maze& maze);
  DifficultyEstimate estimate(const Maze& maze) const;
  std::uint64_t seed_for(const Maze& maze) const;

  const PlayerProfile& profile() const { return profile_; }
  int runs() const { return runs_; }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<int>& key) const;
  };

  PlayerProfile profile_;
  int runs_;
  std::uint64_t seed_;
  std::unordered_map<std::vector<int>, double, KeyHash> cache_;
};

/// Masked epsilon-greedy choice; ties in the greedy branch go to the lowest index.
int select_action(const QNetwork& net, const StateEncoding& state, const std::vector<bool>& legal_mask,
                  double epsilon, Rng& rng);
int masked_argmax(std::span<const double> q, const std::vector<bool>& legal_mask);

/// y = r for terminal items, r + gamma * max legal Q_target(s') otherwise.
std::vector<double> q_targets(const QNetwork& target_net, std::span<const Transition* const> batch,
                              double gamma);

struct Episode {
  Maze maze;
  std::vector<Transition> transitions;
  std::optional<int> rating;
};

/// Sets the last transition's reward from a rating.
void backfill_rating(Episode& episode, int rating, double target_rating);

/// Builds one maze with the given policy, without rating it.
Episode build_maze(const QNetwork& net, std::shared_ptr<const RoomGrid> grid, DifficultyModel& difficulty,
                   double epsilon, Rng& rng);

/// build_maze, then one simulated walk by `rater` supplies the rating.
Episode generate_episode(const QNetwork& net, std::shared_ptr<const RoomGrid> grid,
                         const PlayerProfile& rater, DifficultyModel& difficulty, double epsilon,
                         const TrainConfig& config, Rng& rng);

/// Network, target network, optimizer, replay buffer and RNG of one learner.
class Agent {
 public:
  Agent(std::shared_ptr<const RoomGrid> grid, PlayerProfile sim_profile, TrainConfig config);

  const RoomGrid& grid() const { return *grid_; }
  const std::shared_ptr<const RoomGrid>& grid_ptr() const { return grid_; }
  const TrainConfig& config() const { return config_; }
  const PlayerProfile& sim_profile() const { return difficulty_.profile(); }

  QNetwork& net() { return net_; }
  const QNetwork& net() const { return net_; }
  QNetwork& target_net() { return target_net_; }
  const QNetwork& target_net() const { return target_net_; }
  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  DifficultyModel& difficulty() { return difficulty_; }

  long gradient_steps() const { return gradient_steps_; }
  void set_gradient_steps(long n) { gradient_steps_ = n; }
  int episodes() const { return episodes_; }
  void set_episodes(int n) { episodes_ = n; }

  /// One uniform minibatch update. Throws AgentError when the buffer holds
  /// fewer than batch_size transitions.
  double train_step();
  /// Update on an explicit batch; counts as one gradient step.
  double train_on(std::span<const Transition* const> batch);

  Episode build_maze(double epsilon);
  Episode generate_episode(const PlayerProfile& rater, double epsilon);

  /// Backfills the reward from a 1..5 rating, stores the transitions and runs
  /// online_steps updates. Every batch carries the new transitions plus a
  /// uniform draw from the buffer. Returns the mean loss.
  double online_update(Episode& episode, int rating);

 private:
  void after_gradient_step();

  std::shared_ptr<const RoomGrid> grid_;
  TrainConfig config_;
  QNetwork net_;
  QNetwork target_net_;
  AdamState adam_;
  GradientSet gradients_;  // scratch
  ReplayBuffer buffer_;
  Rng rng_;
  DifficultyModel difficulty_;
  long gradient_steps_ = 0;
  int episodes_ = 0;
};

struct EpisodeMetrics {
  int episode = 0;
  int rating = 0;
  double abs_error = 0.0;
  double epsilon = 0.0;
  std::optional<double> loss;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeMetrics& m);
void write_metrics_csv(const std::string& path, std::span<const EpisodeMetrics> metrics);

using MetricsCallback = std::function<void(const EpisodeMetrics&)>;

struct PretrainResult {
  Agent agent;
  std::vector<EpisodeMetrics> metrics;
};

/// Runs config.pretrain_episodes simulated episodes; one train step per
/// episode once the buffer holds a full batch.
PretrainResult pretrain(std::shared_ptr<const RoomGrid> grid, const PlayerProfile& profile,
                        const TrainConfig& config, const MetricsCallback& on_episode = {});
/// Continues training an existing agent for `episodes` more episodes.
std::vector<EpisodeMetrics> continue_training(Agent& agent, const PlayerProfile& rater, int episodes,
                                              const MetricsCallback& on_episode = {});

struct EvaluationResult {
  double mean_abs_error = 0.0;
  double mean_rating = 0.0;
  double mean_room_passes = 0.0;
  double mean_rooms_connected = 0.0;
  std::vector<int> ratings;
};

/// Builds n_mazes mazes with the agent's network at `epsilon` and rates each
/// with one simulated walk of `rater`. Uses its own RNG; the agent is not trained.
EvaluationResult evaluate(Agent& agent, const PlayerProfile& rater, int n_mazes, double epsilon,
                          std::uint64_t seed);

}  // namespace ddamaze
