// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"

namespace foldpc {

/// w x h lattice in row-major order: cell i sits at row i / w, column i % w.
/// `points` are the lattice coordinates fed to the folding network.
struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Vec3> points;

  std::size_t size() const { return width * height; }
  std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Horizontal and vertical neighbours (2 to 4 cells) in fixed order:
/// up, left, right, down.
struct GridNeighbors {
  std::array<std::size_t, 4> cells{};
  std::size_t count = 0;
};

inline GridNeighbors grid_neighbors(std::size_t width, std::size_t height, std::size_t i) {
  GridNeighbors n;
  const std::size_t row = i / width;
  const std::size_t col = i % width;
  if (row > 0) n.cells[n.count++] = i - width;
  if (col > 0) n.cells[n.count++] = i - 1;
  if (col + 1 < width) n.cells[n.count++] = i + 1;
  if (row + 1 < height) n.cells[n.count++] = i + width;
  return n;
}

inline GridNeighbors grid_neighbors(const Grid& g, std::size_t i) { return grid_neighbors(g.width, g.height, i); }

inline std::size_t ceil_sqrt(std::size_t n) {
  std::size_t r = 0;
  while (r * r < n) ++r;
  return r;
}

inline double lattice_coordinate(std::size_t i, std::size_t count) {
  if (count <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(count - 1);
}

inline Grid make_grid(std::size_t width, std::size_t height) {
  require(width >= 1 && height >= 1, "grid dimensions must be positive");
  Grid g;
  g.width = width;
  g.height = height;
  g.points.reserve(width * height);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      g.points.push_back({lattice_coordinate(c, width), lattice_coordinate(r, height), 0.0});
    }
  }
  return g;
}

/// Square lattice over [-1,1]^2 with at least n cells.
inline Grid make_grid(std::size_t n) {
  require(n >= 1, "grid needs at least one point");
  const std::size_t side = ceil_sqrt(n);
  return make_grid(side, side);
}

}  // namespace foldpc
