// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/spatial_index.hpp"

namespace foldpc {

/// Forward map original point -> grid cell, its inverse lists and the
/// resulting per-cell occupancy.
struct MappingTable {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t k = 0;
  std::vector<std::size_t> forward;
  std::vector<std::vector<std::size_t>> inverse;
  std::vector<std::uint32_t> occupancy;

  std::size_t cells() const { return width * height; }
  std::uint32_t max_occupancy() const {
    std::uint32_t m = 0;
    for (std::uint32_t o : occupancy) m = std::max(m, o);
    return m;
  }
  bool lossless() const { return max_occupancy() <= 1; }

  friend bool operator==(const MappingTable&, const MappingTable&) = default;
};

/// Greedy occupancy-regularized assignment. Original points are visited in
/// index order; each picks, among its k nearest folded points, the cell
/// minimizing occupancy * distance, with occupancies updated after every
/// assignment. Ties go to the smaller distance, then the lower cell index.
inline MappingTable build_mapping(std::span<const Vec3> cloud, std::span<const Vec3> recon, std::size_t width,
                                  std::size_t height, std::size_t k, const Execution& exec = {}) {
  require(!cloud.empty() && !recon.empty(), "mapping needs nonempty sets");
  require(recon.size() == width * height, "reconstruction is not aligned with the grid");
  require(k >= 1, "k must be positive");
  if (k > recon.size())
    fail(ErrorKind::invalid_argument,
         "k = " + std::to_string(k) + " exceeds the " + std::to_string(recon.size()) + " grid cells");

  const SpatialIndex index(recon);
  std::vector<std::vector<Neighbor>> candidates(cloud.size());
  parallel_for(cloud.size(), exec, [&](std::size_t p) { candidates[p] = index.nearest(cloud[p], k); });

  MappingTable t;
  t.width = width;
  t.height = height;
  t.k = k;
  t.forward.resize(cloud.size());
  t.inverse.resize(recon.size());
  t.occupancy.assign(recon.size(), 0);
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    // candidates are sorted by (distance, index), so a strict comparison keeps
    // the tie-break rule
    std::size_t best = candidates[p].front().index;
    double best_score = t.occupancy[best] * std::sqrt(candidates[p].front().squared_distance);
    for (std::size_t c = 1; c < candidates[p].size(); ++c) {
      const Neighbor& n = candidates[p][c];
      const double score = t.occupancy[n.index] * std::sqrt(n.squared_distance);
      if (score < best_score) {
        best = n.index;
        best_score = score;
      }
    }
    t.forward[p] = best;
    t.inverse[best].push_back(p);
    ++t.occupancy[best];
  }
  return t;
}

inline MappingTable build_mapping(std::span<const Vec3> cloud, std::span<const Vec3> recon, const Grid& grid,
                                  std::size_t k, const Execution& exec = {}) {
  return build_mapping(cloud, recon, grid.width, grid.height, k, exec);
}

/// The image that is handed to the 2D codec: one RGB pixel per grid cell.
struct AttributeImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;
  std::vector<std::uint32_t> occupancy;
  std::vector<Vec3> provenance;  // lattice coordinate of the source grid cell

  friend bool operator==(const AttributeImage&, const AttributeImage&) = default;
};

inline std::uint8_t mean_channel(std::uint64_t sum, std::uint64_t count) {
  return static_cast<std::uint8_t>((2 * sum + count) / (2 * count));  // round half up
}

/// Occupied cells take the channelwise mean of their points; empty cells copy
/// the colour of the original point nearest to the cell's folded position.
inline AttributeImage map_attributes(std::span<const Vec3> cloud, std::span<const Rgb> colors,
                                     std::span<const Vec3> recon, const MappingTable& table,
                                     std::span<const Vec3> lattice = {}, const Execution& exec = {}) {
  require(colors.size() == cloud.size() && table.forward.size() == cloud.size(), "mapping does not match the cloud");
  require(recon.size() == table.cells(), "reconstruction does not match the mapping grid");
  AttributeImage img;
  img.width = table.width;
  img.height = table.height;
  img.pixels.resize(table.cells());
  img.occupancy = table.occupancy;
  if (lattice.size() == table.cells()) img.provenance.assign(lattice.begin(), lattice.end());

  const SpatialIndex cloud_index(cloud);
  parallel_for(table.cells(), exec, [&](std::size_t c) {
    const auto& members = table.inverse[c];
    if (members.empty()) {
      img.pixels[c] = colors[cloud_index.nearest_one(recon[c]).index];
      return;
    }
    std::uint64_t r = 0, g = 0, b = 0;
    for (std::size_t p : members) {
      r += colors[p].r;
      g += colors[p].g;
      b += colors[p].b;
    }
    img.pixels[c] = {mean_channel(r, members.size()), mean_channel(g, members.size()), mean_channel(b, members.size())};
  });
  return img;
}

/// Reads back one colour per original point through the forward map.
inline std::vector<Rgb> decode_attributes(const AttributeImage& image, const MappingTable& table) {
  if (image.width != table.width || image.height != table.height || image.pixels.size() != table.cells())
    fail(ErrorKind::invalid_argument, "image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                          " but the mapping grid is " + std::to_string(table.width) + "x" +
                                          std::to_string(table.height));
  std::vector<Rgb> out;
  out.reserve(table.forward.size());
  for (std::size_t cell : table.forward) out.push_back(image.pixels[cell]);
  return out;
}

}  // namespace foldpc
