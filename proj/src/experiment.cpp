#include "ddamaze/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace ddamaze {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  return pearson(average_ranks(x), average_ranks(y));
}

ExperimentReport run_experiment(Agent& agent, const PlayerProfile& player, const ExperimentOptions& options) {
  if (options.rounds < 1) throw AgentError("experiment needs at least one round");
  if (options.estimate_runs < 1) throw AgentError("estimate_runs must be positive");
  player.validate();

  ExperimentReport report;
  report.agent_profile = agent.sim_profile().name;
  report.player_profile = player.name;
  report.target_rating = agent.config().target_rating;

  agent.rng().seed(splitmix64(options.seed));
  const std::uint64_t walk_seed = splitmix64(options.seed ^ 0x706C61796572ULL);

  for (int k = 1; k <= options.rounds; ++k) {
    Episode episode = agent.build_maze(options.epsilon);
    const auto round_seed = splitmix64(walk_seed + static_cast<std::uint64_t>(k));

    ExperimentRound round;
    round.round = k;
    round.rating = rate(traverse(episode.maze, player, round_seed), player);
    round.rooms_connected = static_cast<int>(episode.maze.connected().size());
    round.crossings = episode.maze.crossings();
    const auto expected = estimate_difficulty(episode.maze, player, options.estimate_runs, round_seed + 1);
    round.expected_effort = expected.mean_effort;
    round.expected_steps = expected.mean_steps;
    round.expected_rating = expected.mean_rating;
    round.online_loss = agent.online_update(episode, round.rating);
    report.rounds.push_back(round);
  }

  std::vector<double> index, load, effort;
  double within = 0.0, first = 0.0, second = 0.0;
  const std::size_t half = report.rounds.size() / 2;
  for (std::size_t i = 0; i < report.rounds.size(); ++i) {
    const auto& r = report.rounds[i];
    index.push_back(static_cast<double>(r.round));
    load.push_back(r.expected_load());
    effort.push_back(r.expected_effort);
    const double err = std::abs(r.rating - report.target_rating);
    if (err <= 1.0) within += 1.0;
    (i < half ? first : second) += err;
  }
  report.load_trend = spearman(index, load);
  report.effort_trend = spearman(index, effort);
  report.within_one = within / static_cast<double>(report.rounds.size());
  report.first_half_abs_error = half > 0 ? first / static_cast<double>(half) : 0.0;
  report.second_half_abs_error = second / static_cast<double>(report.rounds.size() - half);
  return report;
}

nlohmann::ordered_json experiment_to_json(const ExperimentReport& report) {
  nlohmann::ordered_json doc;
  doc["agent_profile"] = report.agent_profile;
  doc["player_profile"] = report.player_profile;
  doc["target_rating"] = report.target_rating;
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& r : report.rounds) {
    rounds.push_back({{"round", r.round},
                      {"rating", r.rating},
                      {"rooms", r.rooms_connected},
                      {"crossings", r.crossings},
                      {"expected_effort", r.expected_effort},
                      {"expected_steps", r.expected_steps},
                      {"expected_rating", r.expected_rating},
                      {"online_loss", r.online_loss}});
  }
  doc["rounds"] = std::move(rounds);
  doc["load_trend"] = report.load_trend;
  doc["effort_trend"] = report.effort_trend;
  doc["within_one"] = report.within_one;
  doc["first_half_abs_error"] = report.first_half_abs_error;
  doc["second_half_abs_error"] = report.second_half_abs_error;
  doc["abs_error_decreased"] = report.abs_error_decreased();
  return doc;
}

std::string experiment_to_text(const ExperimentReport& report) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "agent pretrained on %s, rated by %s\n", report.agent_profile.c_str(),
                report.player_profile.c_str());
  out += line;
  out += "round rating rooms crossings exp_effort exp_steps exp_rating\n";
  for (const auto& r : report.rounds) {
    std::snprintf(line, sizeof line, "%5d %6d %5d %9d %10.2f %9.2f %10.3f\n", r.round, r.rating,
                  r.rooms_connected, r.crossings, r.expected_effort, r.expected_steps, r.expected_rating);
    out += line;
  }
  std::snprintf(line, sizeof line,
                "load trend (spearman) %.3f\neffort trend (spearman) %.3f\nwithin one of target %.0f%%\n"
                "mean |rating - target| first half %.3f, second half %.3f (%s)\n",
                report.load_trend, report.effort_trend, 100.0 * report.within_one, report.first_half_abs_error,
                report.second_half_abs_error, report.abs_error_decreased() ? "decreased" : "not decreased");
  out += line;
  return out;
}

}  // namespace ddamaze
