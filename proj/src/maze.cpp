#include "ddamaze/maze.hpp"

#include <algorithm>

namespace ddamaze {

Maze::Maze(std::shared_ptr<const RoomGrid> grid)
    : grid_(std::move(grid)), cells_(static_cast<std::size_t>(grid_->cell_count()), 0) {}

Maze Maze::create(std::shared_ptr<const RoomGrid> grid) {
  if (!grid) throw MazeError("null grid");
  const auto report = validate_grid(*grid);
  if (!report.ok()) throw MazeError("invalid grid:\n" + report.to_string());
  return Maze(std::move(grid));
}

Maze Maze::create(const RoomGrid& grid) {
  return create(std::make_shared<const RoomGrid>(grid));
}

bool Maze::is_connected(int room) const {
  return std::find(connected_.begin(), connected_.end(), room) != connected_.end();
}

bool Maze::is_passable(Cell c) const {
  return c == grid_->start || links(c) != 0;
}

std::vector<Cell> Maze::corridor_cells() const {
  std::vector<Cell> out;
  for (int r = 0; r < grid_->height; ++r) {
    for (int c = 0; c < grid_->width; ++c) {
      if (is_corridor({r, c})) out.push_back({r, c});
    }
  }
  return out;
}

std::size_t Maze::corridor_cell_count() const {
  return static_cast<std::size_t>(std::count_if(
      cells_.begin(), cells_.end(), [](std::uint8_t v) { return (v & kCorridorBit) != 0; }));
}

Cell Maze::anchor() const {
  return connected_.empty() ? grid_->start : grid_->rooms[connected_.back()].pos;
}

Cell Maze::goal() const { return terminal_ ? grid_->end : anchor(); }

std::vector<Action> Maze::legal_actions() const {
  std::vector<Action> out;
  if (terminal_) return out;
  for (int i = 0; i < grid_->room_count(); ++i) {
    if (!is_connected(i)) out.push_back(Action::connect_room(i));
  }
  out.push_back(Action::connect_end());
  return out;
}

std::vector<bool> Maze::legal_mask() const {
  const int n = grid_->room_count();
  std::vector<bool> mask(static_cast<std::size_t>(n) + 1, false);
  for (const auto& a : legal_actions()) mask[static_cast<std::size_t>(a.index(n))] = true;
  return mask;
}

void Maze::link(Cell a, Cell b) {
  std::uint8_t dir = 0;
  for (auto d : kAllDirections) {
    if (step(a, d) == b) dir = d;
  }
  cells_[grid_->index(a)] |= dir;
  cells_[grid_->index(b)] |= opposite(dir);
}

Maze Maze::apply(Action action) const {
  if (terminal_) throw MazeError("maze is terminal; no further connections");
  Cell target;
  if (action.is_end()) {
    target = grid_->end;
  } else {
    if (action.room() < 0 || action.room() >= grid_->room_count()) {
      throw MazeError("room index " + std::to_string(action.room()) + " out of range");
    }
    if (is_connected(action.room())) {
      throw MazeError("room " + std::to_string(action.room()) + " is already connected");
    }
    target = grid_->rooms[action.room()].pos;
  }

  Maze next = *this;
  const auto route = l_route(anchor(), target, true);
  for (std::size_t i = 0; i + 1 < route.size(); ++i) next.link(route[i], route[i + 1]);
  for (std::size_t i = 1; i + 1 < route.size(); ++i) {
    next.cells_[grid_->index(route[i])] |= kCorridorBit;
  }
  next.history_.push_back(action);
  if (action.is_end()) {
    next.terminal_ = true;
  } else {
    next.connected_.push_back(action.room());
  }
  return next;
}

Maze Maze::apply_index(int action_index) const {
  if (action_index < 0 || action_index > grid_->room_count()) {
    throw MazeError("action index " + std::to_string(action_index) + " out of range");
  }
  return apply(Action::from_index(action_index, grid_->room_count()));
}

int Maze::crossings() const {
  int n = 0;
  for (auto v : cells_) n += degree(v & 0x0F) >= 3 ? 1 : 0;
  return n;
}

bool Maze::operator==(const Maze& other) const {
  return *grid_ == *other.grid_ && connected_ == other.connected_ &&
         history_ == other.history_ && cells_ == other.cells_ &&
         terminal_ == other.terminal_;
}

Maze replay(std::shared_ptr<const RoomGrid> grid, std::span<const int> action_indices) {
  Maze maze = Maze::create(std::move(grid));
  for (int a : action_indices) maze = maze.apply_index(a);
  return maze;
}

StateEncoding encode_state(const Maze& maze, double difficulty) {
  const auto& grid = maze.grid();
  StateEncoding s;
  s.height = grid.height;
  s.width = grid.width;
  s.codes.assign(static_cast<std::size_t>(grid.cell_count()), cell_code::kEmpty);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Cell cell{r, c};
      if (!maze.is_corridor(cell)) continue;
      s.codes[grid.index(cell)] =
          degree(maze.links(cell)) >= 3 ? cell_code::kCrossing : cell_code::kCorridor;
    }
  }
  s.codes[grid.index(grid.start)] = cell_code::kStart;
  if (maze.terminal()) s.codes[grid.index(grid.end)] = cell_code::kEnd;
  s.occupied.assign(static_cast<std::size_t>(grid.room_count()), 0);
  for (int id : maze.connected()) {
    s.codes[grid.index(grid.rooms[id].pos)] =
        static_cast<std::uint8_t>(cell_code::kRoomBase + id);
    s.occupied[static_cast<std::size_t>(id)] = 1;
  }
  s.difficulty = difficulty;
  s.crossings = maze.crossings();
  return s;
}

nlohmann::ordered_json maze_to_json_value(const Maze& maze) {
  const auto& grid = maze.grid();
  const int n = grid.room_count();
  nlohmann::ordered_json doc;
  doc["v"] = kMazeSchemaVersion;
  doc["grid"] = grid_to_json(grid);
  auto actions = nlohmann::ordered_json::array();
  for (const auto& a : maze.history()) actions.push_back(a.index(n));
  doc["actions"] = std::move(actions);
  doc["connected"] = maze.connected();
  doc["terminal"] = maze.terminal();
  doc["crossings"] = maze.crossings();
  auto corridors = nlohmann::ordered_json::array();
  for (const auto& c : maze.corridor_cells()) corridors.push_back({c.row, c.col});
  doc["corridors"] = std::move(corridors);
  auto links = nlohmann::ordered_json::array();
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const auto l = maze.links({r, c});
      if (l != 0) links.push_back({r, c, l});
    }
  }
  doc["links"] = std::move(links);
  return doc;
}

std::string maze_to_json(const Maze& maze) { return maze_to_json_value(maze).dump(); }

Maze maze_from_json_value(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw MazeError("maze document must be an object");
    const int version = doc.at("v").get<int>();
    if (version != kMazeSchemaVersion) {
      throw MazeError("unsupported maze schema version " + std::to_string(version));
    }
    auto grid = std::make_shared<const RoomGrid>(grid_from_json(doc.at("grid")));
    const auto actions = doc.at("actions").get<std::vector<int>>();
    for (int a : actions) {
      if (a < 0 || a > grid->room_count()) throw MazeError("action index out of range");
    }
    Maze maze = replay(grid, actions);
    // The stored derived fields must agree with the replayed maze.
    const auto expected = maze_to_json_value(maze);
    for (const char* key : {"connected", "terminal", "crossings", "corridors", "links"}) {
      if (nlohmann::json::parse(expected.at(key).dump()) != doc.at(key)) {
        throw MazeError(std::string("maze document field '") + key +
                        "' disagrees with its action history");
      }
    }
    return maze;
  } catch (const nlohmann::json::exception& e) {
    throw MazeError(std::string("malformed maze document: ") + e.what());
  } catch (const GridError& e) {
    throw MazeError(std::string("malformed maze grid: ") + e.what());
  }
}

Maze maze_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MazeError(std::string("cannot parse maze document: ") + e.what());
  }
  return maze_from_json_value(doc);
}

}  // namespace ddamaze
