#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ddamaze/grid.hpp"

namespace ddamaze {

class MazeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Connection action. Indexed 0..n-1 for rooms and n for the end room.
class Action {
 public:
  static Action connect_room(int room) { return Action(room); }
  static Action connect_end() { return Action(-1); }
  static Action from_index(int index, int room_count) {
    return index == room_count ? connect_end() : connect_room(index);
  }

  bool is_end() const { return room_ < 0; }
  int room() const { return room_; }
  int index(int room_count) const { return is_end() ? room_count : room_; }

  bool operator==(const Action&) const = default;

 private:
  explicit Action(int room) : room_(room) {}
  int room_;
};

/// Open passage bits per cell.
enum Direction : std::uint8_t { kNorth = 1, kEast = 2, kSouth = 4, kWest = 8 };

inline constexpr std::uint8_t kAllDirections[4] = {kNorth, kEast, kSouth, kWest};

inline std::uint8_t opposite(std::uint8_t dir) {
  switch (dir) {
    case kNorth:
      return kSouth;
    case kSouth:
      return kNorth;
    case kEast:
      return kWest;
    default:
      return kEast;
  }
}

inline Cell step(Cell c, std::uint8_t dir) {
  switch (dir) {
    case kNorth:
      return {c.row - 1, c.col};
    case kSouth:
      return {c.row + 1, c.col};
    case kEast:
      return {c.row, c.col + 1};
    default:
      return {c.row, c.col - 1};
  }
}

inline int degree(std::uint8_t links) { return __builtin_popcount(links); }

/// Immutable maze value. apply() returns a new maze.
class Maze {
 public:
  /// Starts a maze with only the start cell. Throws MazeError on an invalid grid.
  static Maze create(std::shared_ptr<const RoomGrid> grid);
  static Maze create(const RoomGrid& grid);

  const RoomGrid& grid() const { return *grid_; }
  const std::shared_ptr<const RoomGrid>& grid_ptr() const { return grid_; }

  /// Room ids in connection order (start implicit).
  const std::vector<int>& connected() const { return connected_; }
  const std::vector<Action>& history() const { return history_; }
  bool terminal() const { return terminal_; }
  bool is_connected(int room) const;

  std::uint8_t links(Cell c) const { return cells_[grid_->index(c)] & 0x0F; }
  bool is_corridor(Cell c) const { return (cells_[grid_->index(c)] & kCorridorBit) != 0; }
  bool is_passable(Cell c) const;
  /// Corridor cells in row-major order (room, start and end cells excluded).
  std::vector<Cell> corridor_cells() const;
  std::size_t corridor_cell_count() const;

  /// Cell the next connection starts from.
  Cell anchor() const;
  /// Traversal target: end when terminal, else the latest room, else start.
  Cell goal() const;

  std::vector<Action> legal_actions() const;
  /// n+1 flags; slot n is the end connection.
  std::vector<bool> legal_mask() const;

  Maze apply(Action action) const;
  Maze apply_index(int action_index) const;

  int crossings() const;

  bool operator==(const Maze& other) const;

 private:
  static constexpr std::uint8_t kCorridorBit = 0x10;

  explicit Maze(std::shared_ptr<const RoomGrid> grid);
  void link(Cell a, Cell b);

  std::shared_ptr<const RoomGrid> grid_;
  std::vector<int> connected_;
  std::vector<Action> history_;
  std::vector<std::uint8_t> cells_;
  bool terminal_ = false;
};

/// Replays a sequence of action indices on a fresh maze.
Maze replay(std::shared_ptr<const RoomGrid> grid, std::span<const int> action_indices);

/// Network input. Map codes are stored as small integers; map_value()
/// divides by code_scale().
struct StateEncoding {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> codes;
  double difficulty = 0.0;
  int crossings = 0;
  std::vector<std::uint8_t> occupied;

  double code_scale() const { return 4.0 + static_cast<double>(occupied.size()); }
  double map_value(std::size_t i) const { return codes[i] / code_scale(); }

  bool operator==(const StateEncoding&) const = default;
};

namespace cell_code {
inline constexpr std::uint8_t kEmpty = 0;
inline constexpr std::uint8_t kCorridor = 1;
inline constexpr std::uint8_t kCrossing = 2;
inline constexpr std::uint8_t kStart = 3;
inline constexpr std::uint8_t kEnd = 4;
inline constexpr std::uint8_t kRoomBase = 5;
}  // namespace cell_code

StateEncoding encode_state(const Maze& maze, double difficulty);

inline constexpr int kMazeSchemaVersion = 1;

nlohmann::ordered_json maze_to_json_value(const Maze& maze);
std::string maze_to_json(const Maze& maze);
Maze maze_from_json(std::string_view text);
Maze maze_from_json_value(const nlohmann::json& doc);

}  // namespace ddamaze
