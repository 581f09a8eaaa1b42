#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddamaze/maze.hpp"

namespace ddamaze {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Capabilities of a simulated player.
struct PlayerProfile {
  std::string name;
  double effort_capacity = 30.0;      // summed room effort the player rates as "fitting"
  double cognitive_capacity = 200.0;  // cell moves the player rates as "fitting"
  double repeat_decay = 0.5;          // weight multiplier for a direction already taken

  /// Throws SimulationError unless capacities are positive and decay is in (0,1).
  void validate() const;

  bool operator==(const PlayerProfile&) const = default;
};

PlayerProfile novice_profile();
PlayerProfile average_profile();
PlayerProfile athlete_profile();
std::optional<PlayerProfile> canonical_profile(const std::string& name);

nlohmann::ordered_json profile_to_json(const PlayerProfile& profile);
PlayerProfile profile_from_json(const nlohmann::json& doc);
/// Accepts a canonical name (novice/average/athlete) or a path to a JSON file
/// holding one profile object.
PlayerProfile load_profile(const std::string& name_or_path);

struct RoomPass {
  int room = 0;
  int count = 0;

  bool operator==(const RoomPass&) const = default;
};

struct TraversalResult {
  long steps = 0;
  double effort = 0.0;
  std::vector<RoomPass> room_passes;  // sorted by room id
  bool reached_end = false;
};

/// One stochastic walk from start to maze.goal(). At cells with more than
/// one way forward the walker picks a direction with probability
/// proportional to its weight; weights start at 1 and are multiplied by the
/// profile's repeat_decay each time that direction is taken there. The
/// arrival direction is excluded unless it is the only exit.
TraversalResult traverse(const Maze& maze, const PlayerProfile& profile, std::uint64_t seed);

/// Mean of normalized effort and normalized steps; 1.0 means "at capacity".
double raw_difficulty(double effort, double steps, const PlayerProfile& profile);

/// Maps raw difficulty d to clamp(round(1 + 2d), 1, 5).
int rating_from_difficulty(double d);
int rate(const TraversalResult& result, const PlayerProfile& profile);

struct DifficultyEstimate {
  double mean_rating = 1.0;
  double mean_effort = 0.0;
  double mean_steps = 0.0;
  int n_runs = 0;
};

/// Averages n_runs traversals seeded seed, seed+1, ...
DifficultyEstimate estimate_difficulty(const Maze& maze, const PlayerProfile& profile,
                                       int n_runs, std::uint64_t seed);

}  // namespace ddamaze
