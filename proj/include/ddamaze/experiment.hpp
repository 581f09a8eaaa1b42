#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddamaze/dqn.hpp"

namespace ddamaze {

struct ExperimentOptions {
  int rounds = 10;
  double epsilon = 0.05;  // serving epsilon, as in the service
  std::uint64_t seed = 1;
  int estimate_runs = 2000;  // walks per served-maze expectation
};

struct ExperimentRound {
  int round = 0;  // 1-based
  int rating = 0;
  int rooms_connected = 0;
  int crossings = 0;
  double expected_effort = 0.0;
  double expected_steps = 0.0;
  double expected_rating = 0.0;
  double online_loss = 0.0;

  double expected_load() const { return expected_effort + expected_steps; }
};

struct ExperimentReport {
  std::string agent_profile;
  std::string player_profile;
  double target_rating = 3.0;
  std::vector<ExperimentRound> rounds;
  /// Rank correlation of round number against expected effort + steps.
  double load_trend = 0.0;
  /// Rank correlation of round number against expected effort alone.
  double effort_trend = 0.0;
  /// Share of rounds with |rating - target| <= 1.
  double within_one = 0.0;
  double first_half_abs_error = 0.0;
  double second_half_abs_error = 0.0;

  bool abs_error_decreased() const { return second_half_abs_error < first_half_abs_error; }
};

/// Spearman correlation with average ranks for ties; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Serve a maze, let `player` rate it with one simulated walk, apply the
/// rating as an online update, repeat. The agent is modified in place.
ExperimentReport run_experiment(Agent& agent, const PlayerProfile& player, const ExperimentOptions& options);

nlohmann::ordered_json experiment_to_json(const ExperimentReport& report);
std::string experiment_to_text(const ExperimentReport& report);

}  // namespace ddamaze
