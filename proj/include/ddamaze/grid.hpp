#pragma once

#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ddamaze {

enum class ExerciseKind { Rotation, TorsoBend, BendStretch };

inline constexpr int kExerciseKindCount = 3;

std::string_view to_string(ExerciseKind kind);
ExerciseKind exercise_kind_from_string(std::string_view name);

/// Effort of a single repetition of the given exercise.
double base_cost(ExerciseKind kind);

struct Cell {
  int row = 0;
  int col = 0;

  auto operator<=>(const Cell&) const = default;
};

inline int chebyshev(Cell a, Cell b) {
  const int dr = a.row > b.row ? a.row - b.row : b.row - a.row;
  const int dc = a.col > b.col ? a.col - b.col : b.col - a.col;
  return dr > dc ? dr : dc;
}

struct RoomSpec {
  int id = 0;
  ExerciseKind kind = ExerciseKind::Rotation;
  int repetitions = 1;
  double effort = 0.0;
  Cell pos;

  bool operator==(const RoomSpec&) const = default;
};

/// Builds a room whose effort is base_cost(kind) * repetitions.
RoomSpec make_room(int id, ExerciseKind kind, int repetitions, Cell pos);

struct RoomGrid {
  int width = 0;
  int height = 0;
  Cell start;
  Cell end;
  std::vector<RoomSpec> rooms;

  int room_count() const { return static_cast<int>(rooms.size()); }
  int cell_count() const { return width * height; }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(c.col);
  }
  /// Room id at `c`, or -1.
  int room_at(Cell c) const;

  bool operator==(const RoomGrid&) const = default;
};

/// Labels used in validation reports for the two non-room endpoints.
inline constexpr int kStartPoint = -1;
inline constexpr int kEndPoint = -2;

enum class ViolationKind {
  EmptyGrid,
  OutOfBounds,
  DuplicatePosition,
  BadRoomId,
  NonPositiveRepetitions,
  NonPositiveEffort,
  Proximity,
  ThirdRoomCrossing,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  // Points involved; room ids or kStartPoint / kEndPoint. For a crossing
  // this is (a, b, crossed).
  std::vector<int> points;
  // For ThirdRoomCrossing: true when the horizontal-first route is affected.
  bool horizontal_first = false;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  std::string to_string() const;
};

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 16x16 layout with eight exercise rooms on distinct rows and columns.
RoomGrid default_grid();

ValidationReport validate_grid(const RoomGrid& grid);

/// Cells of the L-shaped route from `from` to `to`, both endpoints included.
/// Horizontal-first walks along from.row to to.col before turning.
std::vector<Cell> l_route(Cell from, Cell to, bool horizontal_first = true);

nlohmann::ordered_json grid_to_json(const RoomGrid& grid);
RoomGrid grid_from_json(const nlohmann::json& doc);
RoomGrid load_grid(const std::string& path_or_default);

}  // namespace ddamaze
