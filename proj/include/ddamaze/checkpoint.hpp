#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "ddamaze/dqn.hpp"

namespace ddamaze {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Compact transition record: the maze is replayed from `prefix`, so only
/// the two difficulty scalars need storing besides action and reward.
nlohmann::ordered_json transition_to_json(const Transition& t, int room_count);
Transition transition_from_json(const nlohmann::json& doc, const Maze& fresh);

/// Full learner state: config, grid, simulation profile, both networks,
/// optimizer moments, replay contents, counters and RNG state.
nlohmann::ordered_json agent_to_json(const Agent& agent);
Agent agent_from_json(const nlohmann::json& doc);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

void save_agent(const Agent& agent, const std::string& path);
Agent load_agent(const std::string& path);

}  // namespace ddamaze
