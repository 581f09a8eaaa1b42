#include "ddamaze/grid.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ddamaze {

std::string_view to_string(ExerciseKind kind) {
  switch (kind) {
    case ExerciseKind::Rotation:
      return "rotation";
    case ExerciseKind::TorsoBend:
      return "torso_bend";
    case ExerciseKind::BendStretch:
      return "bend_stretch";
  }
  return "?";
}

ExerciseKind exercise_kind_from_string(std::string_view name) {
  if (name == "rotation") return ExerciseKind::Rotation;
  if (name == "torso_bend") return ExerciseKind::TorsoBend;
  if (name == "bend_stretch") return ExerciseKind::BendStretch;
  throw GridError("unknown exercise kind '" + std::string(name) + "'");
}

double base_cost(ExerciseKind kind) {
  switch (kind) {
    case ExerciseKind::Rotation:
      return 1.0;
    case ExerciseKind::TorsoBend:
      return 1.2;
    case ExerciseKind::BendStretch:
      return 1.5;
  }
  return 0.0;
}

RoomSpec make_room(int id, ExerciseKind kind, int repetitions, Cell pos) {
  return RoomSpec{id, kind, repetitions, base_cost(kind) * repetitions, pos};
}

int RoomGrid::room_at(Cell c) const {
  for (const auto& room : rooms) {
    if (room.pos == c) return room.id;
  }
  return -1;
}

RoomGrid default_grid() {
  using K = ExerciseKind;
  RoomGrid grid;
  grid.width = 16;
  grid.height = 16;
  grid.start = {7, 0};
  grid.end = {8, 15};
  // Every point sits on its own row and column, so no L-route between two
  // points can pass through a third.
  grid.rooms = {
      make_room(0, K::Rotation, 5, {2, 3}),
      make_room(1, K::Rotation, 10, {12, 12}),
      make_room(2, K::Rotation, 15, {5, 9}),
      make_room(3, K::TorsoBend, 5, {13, 2}),
      make_room(4, K::TorsoBend, 10, {1, 13}),
      make_room(5, K::BendStretch, 5, {10, 6}),
      make_room(6, K::BendStretch, 10, {4, 11}),
      make_room(7, K::BendStretch, 15, {14, 10}),
  };
  return grid;
}

std::vector<Cell> l_route(Cell from, Cell to, bool horizontal_first) {
  std::vector<Cell> cells;
  Cell cur = from;
  cells.push_back(cur);
  auto walk_cols = [&] {
    while (cur.col != to.col) {
      cur.col += cur.col < to.col ? 1 : -1;
      cells.push_back(cur);
    }
  };
  auto walk_rows = [&] {
    while (cur.row != to.row) {
      cur.row += cur.row < to.row ? 1 : -1;
      cells.push_back(cur);
    }
  };
  if (horizontal_first) {
    walk_cols();
    walk_rows();
  } else {
    walk_rows();
    walk_cols();
  }
  return cells;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptyGrid:
      return "empty_grid";
    case ViolationKind::OutOfBounds:
      return "out_of_bounds";
    case ViolationKind::DuplicatePosition:
      return "duplicate_position";
    case ViolationKind::BadRoomId:
      return "bad_room_id";
    case ViolationKind::NonPositiveRepetitions:
      return "non_positive_repetitions";
    case ViolationKind::NonPositiveEffort:
      return "non_positive_effort";
    case ViolationKind::Proximity:
      return "proximity";
    case ViolationKind::ThirdRoomCrossing:
      return "third_room_crossing";
  }
  return "?";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  std::size_t n = 0;
  for (const auto& v : violations) n += v.kind == kind ? 1 : 0;
  return n;
}

std::string ValidationReport::to_string() const {
  if (ok()) return "OK\n";
  std::ostringstream out;
  for (const auto& v : violations) {
    out << ddamaze::to_string(v.kind) << ": " << v.message << '\n';
  }
  return out.str();
}

namespace {

struct Point {
  int label;
  Cell pos;
};

std::string label_name(int label) {
  if (label == kStartPoint) return "start";
  if (label == kEndPoint) return "end";
  return "room " + std::to_string(label);
}

std::string cell_name(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

}  // namespace

ValidationReport validate_grid(const RoomGrid& grid) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::vector<int> points, std::string msg,
                 bool horizontal_first = false) {
    report.violations.push_back(
        Violation{kind, std::move(points), horizontal_first, std::move(msg)});
  };

  if (grid.width <= 0 || grid.height <= 0) {
    add(ViolationKind::EmptyGrid, {}, "grid has no cells");
    return report;
  }

  std::vector<Point> points;
  points.push_back({kStartPoint, grid.start});
  points.push_back({kEndPoint, grid.end});
  for (std::size_t i = 0; i < grid.rooms.size(); ++i) {
    const auto& room = grid.rooms[i];
    if (room.id != static_cast<int>(i)) {
      add(ViolationKind::BadRoomId, {room.id},
          "room at index " + std::to_string(i) + " has id " +
              std::to_string(room.id));
    }
    if (room.repetitions <= 0) {
      add(ViolationKind::NonPositiveRepetitions, {room.id},
          label_name(room.id) + " has non-positive repetitions");
    }
    if (!(room.effort > 0.0)) {
      add(ViolationKind::NonPositiveEffort, {room.id},
          label_name(room.id) + " has non-positive effort");
    }
    points.push_back({room.id, room.pos});
  }

  // Rooms must sit strictly inside the border; start and end just in bounds.
  for (const auto& p : points) {
    const bool room = p.label >= 0;
    const bool inside =
        room ? (p.pos.row > 0 && p.pos.row < grid.height - 1 &&
                p.pos.col > 0 && p.pos.col < grid.width - 1)
             : grid.in_bounds(p.pos);
    if (!inside) {
      add(ViolationKind::OutOfBounds, {p.label},
          label_name(p.label) + " at " + cell_name(p.pos) +
              " is outside the allowed area");
    }
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].pos == points[j].pos) {
        add(ViolationKind::DuplicatePosition, {points[i].label, points[j].label},
            label_name(points[i].label) + " and " + label_name(points[j].label) +
                " share cell " + cell_name(points[i].pos));
      }
    }
  }

  for (std::size_t i = 0; i < grid.rooms.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.rooms.size(); ++j) {
      const auto& a = grid.rooms[i];
      const auto& b = grid.rooms[j];
      if (a.kind == b.kind && chebyshev(a.pos, b.pos) <= 2) {
        add(ViolationKind::Proximity, {a.id, b.id},
            label_name(a.id) + " and " + label_name(b.id) + " are both " +
                std::string(ddamaze::to_string(a.kind)) +
                " within Chebyshev distance " +
                std::to_string(chebyshev(a.pos, b.pos)));
      }
    }
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].pos == points[j].pos) continue;  // reported as a duplicate
      for (bool horizontal_first : {true, false}) {
        const auto route = l_route(points[i].pos, points[j].pos, horizontal_first);
        std::set<Cell> on_route(route.begin() + 1, route.end() - 1);
        for (std::size_t k = 0; k < points.size(); ++k) {
          if (k == i || k == j) continue;
          if (points[k].pos == points[i].pos || points[k].pos == points[j].pos) {
            continue;  // reported as a duplicate
          }
          if (on_route.contains(points[k].pos)) {
            add(ViolationKind::ThirdRoomCrossing,
                {points[i].label, points[j].label, points[k].label},
                std::string(horizontal_first ? "horizontal" : "vertical") +
                    "-first route between " + label_name(points[i].label) +
                    " and " + label_name(points[j].label) + " crosses " +
                    label_name(points[k].label),
                horizontal_first);
          }
        }
      }
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json cell_json(Cell c) { return {c.row, c.col}; }

Cell cell_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw GridError("cell must be [row, col]");
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

}  // namespace

nlohmann::ordered_json grid_to_json(const RoomGrid& grid) {
  nlohmann::ordered_json doc;
  doc["width"] = grid.width;
  doc["height"] = grid.height;
  doc["start"] = cell_json(grid.start);
  doc["end"] = cell_json(grid.end);
  auto rooms = nlohmann::ordered_json::array();
  for (const auto& room : grid.rooms) {
    nlohmann::ordered_json r;
    r["id"] = room.id;
    r["kind"] = std::string(to_string(room.kind));
    r["reps"] = room.repetitions;
    r["effort"] = room.effort;
    r["pos"] = cell_json(room.pos);
    rooms.push_back(std::move(r));
  }
  doc["rooms"] = std::move(rooms);
  return doc;
}

RoomGrid grid_from_json(const nlohmann::json& doc) {
  try {
    RoomGrid grid;
    grid.width = doc.at("width").get<int>();
    grid.height = doc.at("height").get<int>();
    grid.start = cell_from(doc.at("start"));
    grid.end = cell_from(doc.at("end"));
    for (const auto& r : doc.at("rooms")) {
      const auto kind = exercise_kind_from_string(r.at("kind").get<std::string>());
      RoomSpec room = make_room(r.at("id").get<int>(), kind,
                                r.at("reps").get<int>(), cell_from(r.at("pos")));
      // An explicit effort overrides the base-cost product.
      if (r.contains("effort")) room.effort = r.at("effort").get<double>();
      grid.rooms.push_back(room);
    }
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw GridError(std::string("malformed grid document: ") + e.what());
  }
}

RoomGrid load_grid(const std::string& path_or_default) {
  if (path_or_default.empty() || path_or_default == "default") return default_grid();
  std::ifstream in(path_or_default);
  if (!in) throw GridError("cannot open grid file '" + path_or_default + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw GridError("cannot parse grid file '" + path_or_default + "': " + e.what());
  }
  return grid_from_json(doc);
}

}  // namespace ddamaze
