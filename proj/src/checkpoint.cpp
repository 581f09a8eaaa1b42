#include "ddamaze/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace ddamaze {

nlohmann::ordered_json transition_to_json(const Transition& t, int room_count) {
  (void)room_count;
  nlohmann::ordered_json doc;
  doc["p"] = t.prefix;
  doc["a"] = t.action;
  doc["r"] = t.reward;
  doc["t"] = t.terminal;
  doc["d"] = t.state.difficulty;
  if (!t.terminal) doc["dn"] = t.next_state.difficulty;
  return doc;
}

Transition transition_from_json(const nlohmann::json& doc, const Maze& fresh) {
  Transition t;
  t.prefix = doc.at("p").get<std::vector<int>>();
  t.action = doc.at("a").get<int>();
  t.reward = doc.at("r").get<double>();
  t.terminal = doc.at("t").get<bool>();
  Maze maze = fresh;
  for (int a : t.prefix) maze = maze.apply_index(a);
  t.state = encode_state(maze, doc.at("d").get<double>());
  const Maze next = maze.apply_index(t.action);
  if (next.terminal() != t.terminal) throw CheckpointError("transition terminal flag disagrees with replay");
  if (t.terminal) {
    t.legal_mask_next.assign(static_cast<std::size_t>(fresh.grid().room_count()) + 1, false);
  } else {
    t.next_state = encode_state(next, doc.at("dn").get<double>());
    t.legal_mask_next = next.legal_mask();
  }
  return t;
}

nlohmann::ordered_json agent_to_json(const Agent& agent) {
  nlohmann::ordered_json doc;
  doc["v"] = kCheckpointVersion;
  doc["kind"] = "ddamaze-agent";
  doc["config"] = config_to_json(agent.config());
  doc["grid"] = grid_to_json(agent.grid());
  doc["profile"] = profile_to_json(agent.sim_profile());
  doc["episodes"] = agent.episodes();
  doc["gradient_steps"] = agent.gradient_steps();
  std::ostringstream rng;
  rng << agent.rng();
  doc["rng"] = rng.str();
  doc["net"] = network_to_json(agent.net());
  doc["target_net"] = network_to_json(agent.target_net());

  const auto& adam = agent.adam();
  nlohmann::ordered_json opt;
  opt["t"] = adam.t;
  opt["beta1"] = adam.beta1;
  opt["beta2"] = adam.beta2;
  opt["epsilon"] = adam.epsilon;
  opt["m"] = parameters_to_json(adam.m);
  opt["v"] = parameters_to_json(adam.v);
  doc["adam"] = std::move(opt);

  const auto& buffer = agent.buffer();
  const int n = agent.grid().room_count();
  nlohmann::ordered_json replay;
  replay["capacity"] = buffer.capacity();
  replay["size"] = buffer.size();
  replay["head"] = buffer.head();
  auto items = nlohmann::ordered_json::array();
  for (const auto& t : buffer.slots()) items.push_back(transition_to_json(t, n));
  replay["transitions"] = std::move(items);
  doc["replay"] = std::move(replay);
  return doc;
}

Agent agent_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || doc.value("kind", "") != "ddamaze-agent") {
      throw CheckpointError("not an agent checkpoint");
    }
    const int version = doc.at("v").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    auto grid = std::make_shared<const RoomGrid>(grid_from_json(doc.at("grid")));
    Agent agent(grid, profile_from_json(doc.at("profile")), config_from_json(doc.at("config")));
    agent.set_episodes(doc.at("episodes").get<int>());
    agent.set_gradient_steps(doc.at("gradient_steps").get<long>());
    std::istringstream rng(doc.at("rng").get<std::string>());
    rng >> agent.rng();
    if (!rng) throw CheckpointError("corrupt RNG state");

    agent.net() = network_from_json(doc.at("net"));
    agent.target_net() = network_from_json(doc.at("target_net"));
    if (agent.net().shape() != agent.config().network ||
        agent.target_net().shape() != agent.config().network) {
      throw CheckpointError("network shape disagrees with config");
    }

    const auto& opt = doc.at("adam");
    auto& adam = agent.adam();
    adam.t = opt.at("t").get<long>();
    adam.beta1 = opt.at("beta1").get<double>();
    adam.beta2 = opt.at("beta2").get<double>();
    adam.epsilon = opt.at("epsilon").get<double>();
    adam.m = parameters_from_json(opt.at("m"), agent.config().network);
    adam.v = parameters_from_json(opt.at("v"), agent.config().network);

    const auto& replay = doc.at("replay");
    const Maze fresh = Maze::create(grid);
    std::vector<Transition> slots;
    const auto& items = replay.at("transitions");
    if (items.size() != replay.at("size").get<std::size_t>()) {
      throw CheckpointError("replay size disagrees with stored transitions");
    }
    slots.reserve(items.size());
    for (const auto& item : items) slots.push_back(transition_from_json(item, fresh));
    agent.buffer() = ReplayBuffer::restore(replay.at("capacity").get<std::size_t>(),
                                           replay.at("head").get<std::size_t>(), std::move(slots));
    return agent;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw CheckpointError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_agent(const Agent& agent, const std::string& path) {
  write_file_atomic(path, agent_to_json(agent).dump());
}

Agent load_agent(const std::string& path) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("corrupt or truncated checkpoint '" + path + "': " + e.what());
  }
  return agent_from_json(doc);
}

}  // namespace ddamaze
