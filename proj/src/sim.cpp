#include "ddamaze/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace ddamaze {

void PlayerProfile::validate() const {
  if (!(effort_capacity > 0.0)) throw SimulationError("effort capacity must be positive");
  if (!(cognitive_capacity > 0.0)) throw SimulationError("cognitive capacity must be positive");
  if (!(repeat_decay > 0.0 && repeat_decay < 1.0)) {
    throw SimulationError("repeat decay must lie strictly between 0 and 1");
  }
}

PlayerProfile novice_profile() { return {"novice", 15.0, 120.0, 0.5}; }
PlayerProfile average_profile() { return {"average", 30.0, 200.0, 0.5}; }
PlayerProfile athlete_profile() { return {"athlete", 60.0, 300.0, 0.5}; }

std::optional<PlayerProfile> canonical_profile(const std::string& name) {
  if (name == "novice") return novice_profile();
  if (name == "average") return average_profile();
  if (name == "athlete") return athlete_profile();
  return std::nullopt;
}

nlohmann::ordered_json profile_to_json(const PlayerProfile& profile) {
  nlohmann::ordered_json doc;
  doc["name"] = profile.name;
  doc["e_cap"] = profile.effort_capacity;
  doc["s_cap"] = profile.cognitive_capacity;
  doc["beta"] = profile.repeat_decay;
  return doc;
}

PlayerProfile profile_from_json(const nlohmann::json& doc) {
  PlayerProfile p;
  try {
    p.name = doc.at("name").get<std::string>();
    p.effort_capacity = doc.at("e_cap").get<double>();
    p.cognitive_capacity = doc.at("s_cap").get<double>();
    p.repeat_decay = doc.value("beta", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw SimulationError(std::string("malformed profile: ") + e.what());
  }
  p.validate();
  return p;
}

PlayerProfile load_profile(const std::string& name_or_path) {
  if (auto p = canonical_profile(name_or_path)) return *p;
  std::ifstream in(name_or_path);
  if (!in) throw SimulationError("unknown profile '" + name_or_path + "'");
  try {
    return profile_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SimulationError("cannot parse profile file '" + name_or_path + "': " + e.what());
  }
}

namespace {

// Reusable per-maze scratch space for repeated walks.
class Walker {
 public:
  Walker(const Maze& maze, const PlayerProfile& profile)
      : maze_(maze),
        grid_(maze.grid()),
        decay_(profile.repeat_decay),
        weights_(static_cast<std::size_t>(grid_.cell_count()) * 4, 1.0),
        room_of_cell_(static_cast<std::size_t>(grid_.cell_count()), -1),
        passes_(static_cast<std::size_t>(grid_.room_count()), 0) {
    for (int id : maze.connected()) room_of_cell_[grid_.index(grid_.rooms[id].pos)] = id;
    step_cap_ = 50L * static_cast<long>(std::max<std::size_t>(maze.corridor_cell_count(), 1));
  }

  TraversalResult walk(std::uint64_t seed) {
    std::fill(weights_.begin(), weights_.end(), 1.0);
    std::fill(passes_.begin(), passes_.end(), 0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    TraversalResult result;
    const Cell goal = maze_.goal();
    Cell pos = grid_.start;
    std::uint8_t back = 0;  // direction leading back to the previous cell
    while (pos != goal) {
      if (result.steps >= step_cap_) {
        throw SimulationError("traversal exceeded step cap; maze is corrupt");
      }
      const std::uint8_t links = maze_.links(pos);
      if (links == 0) throw SimulationError("goal unreachable: walker is enclosed");
      std::uint8_t options = links & static_cast<std::uint8_t>(~back);
      if (options == 0) options = back;

      std::uint8_t dir = 0;
      if (degree(options) == 1) {
        dir = options;
      } else {
        double* w = &weights_[grid_.index(pos) * 4];
        double total = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (options & kAllDirections[k]) total += w[k];
        }
        double u = unit(rng) * total;
        int chosen = -1;
        for (int k = 0; k < 4; ++k) {
          if (!(options & kAllDirections[k])) continue;
          chosen = k;
          if (u < w[k]) break;
          u -= w[k];
        }
        w[chosen] *= decay_;
        dir = kAllDirections[chosen];
      }

      pos = step(pos, dir);
      back = opposite(dir);
      ++result.steps;
      const int room = room_of_cell_[grid_.index(pos)];
      if (room >= 0) {
        result.effort += grid_.rooms[room].effort;
        ++passes_[static_cast<std::size_t>(room)];
      }
    }
    for (std::size_t id = 0; id < passes_.size(); ++id) {
      if (passes_[id] > 0) result.room_passes.push_back({static_cast<int>(id), passes_[id]});
    }
    result.reached_end = maze_.terminal();
    return result;
  }

 private:
  const Maze& maze_;
  const RoomGrid& grid_;
  double decay_;
  long step_cap_ = 0;
  std::vector<double> weights_;
  std::vector<int> room_of_cell_;
  std::vector<int> passes_;
};

}  // namespace

TraversalResult traverse(const Maze& maze, const PlayerProfile& profile, std::uint64_t seed) {
  profile.validate();
  return Walker(maze, profile).walk(seed);
}

double raw_difficulty(double effort, double steps, const PlayerProfile& profile) {
  return 0.5 * (effort / profile.effort_capacity) + 0.5 * (steps / profile.cognitive_capacity);
}

int rating_from_difficulty(double d) {
  const long r = std::lround(1.0 + 2.0 * d);
  return static_cast<int>(std::clamp(r, 1L, 5L));
}

int rate(const TraversalResult& result, const PlayerProfile& profile) {
  return rating_from_difficulty(
      raw_difficulty(result.effort, static_cast<double>(result.steps), profile));
}

DifficultyEstimate estimate_difficulty(const Maze& maze, const PlayerProfile& profile,
                                       int n_runs, std::uint64_t seed) {
  if (n_runs < 1) throw SimulationError("n_runs must be at least 1");
  profile.validate();
  Walker walker(maze, profile);
  double rating_sum = 0.0, effort_sum = 0.0, steps_sum = 0.0;
  for (int i = 0; i < n_runs; ++i) {
    const auto r = walker.walk(seed + static_cast<std::uint64_t>(i));
    rating_sum += rate(r, profile);
    effort_sum += r.effort;
    steps_sum += static_cast<double>(r.steps);
  }
  const double n = static_cast<double>(n_runs);
  return {rating_sum / n, effort_sum / n, steps_sum / n, n_runs};
}

}  // namespace ddamaze
