#include "ddamaze/render.hpp"

namespace ddamaze {

namespace {

char room_glyph(int id) {
  if (id < 10) return static_cast<char>('0' + id);
  if (id < 36) return static_cast<char>('a' + id - 10);
  return '?';
}

}  // namespace

std::string render_maze(const Maze& maze) {
  const RoomGrid& grid = maze.grid();
  const int rows = 2 * grid.height + 1;
  const int cols = 2 * grid.width + 1;
  std::vector<std::string> art(static_cast<std::size_t>(rows), std::string(static_cast<std::size_t>(cols), '#'));

  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Cell cell{r, c};
      if (!maze.is_passable(cell)) continue;
      char glyph = ' ';
      if (cell == grid.start) {
        glyph = 'S';
      } else if (cell == grid.end) {
        glyph = 'E';
      } else if (const int room = grid.room_at(cell); room >= 0) {
        glyph = room_glyph(room);
      } else if (degree(maze.links(cell)) >= 3) {
        glyph = '+';
      }
      art[2 * r + 1][2 * c + 1] = glyph;
      const std::uint8_t links = maze.links(cell);
      if (links & kEast) art[2 * r + 1][2 * c + 2] = ' ';
      if (links & kSouth) art[2 * r + 2][2 * c + 1] = ' ';
    }
  }

  std::string out;
  out.reserve(static_cast<std::size_t>(rows * (cols + 1)));
  for (const auto& line : art) {
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace ddamaze
