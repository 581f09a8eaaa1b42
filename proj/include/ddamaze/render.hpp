#pragma once

#include <string>

#include "ddamaze/maze.hpp"

namespace ddamaze {

/// Top-down text art, (2H+1) lines of (2W+1) characters. Cell (r, c) sits at
/// (2r+1, 2c+1) and the characters between neighbouring cells show whether
/// they are linked. Walls and unused cells are '#', corridors ' ', crossings
/// '+', start 'S', end 'E' and rooms their id (0-9, then a-z).
std::string render_maze(const Maze& maze);

}  // namespace ddamaze
