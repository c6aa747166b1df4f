// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"

namespace foldpc {

/// Positions plus one RGB triplet per point, index-aligned.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Rgb> colors;

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return colors.size() == positions.size(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline void validate_positions(std::span<const Vec3> positions) {
  require(!positions.empty(), "point cloud must contain at least one point");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!is_finite(positions[i]))
      fail(ErrorKind::invalid_argument, "non-finite coordinate at point " + std::to_string(i));
  }
}

/// Colours are optional (positions-only clouds) but, if present, one per point.
inline void validate(const PointCloud& pc) {
  validate_positions(pc.positions);
  require(pc.colors.empty() || pc.colors.size() == pc.positions.size(),
          "point cloud has " + std::to_string(pc.positions.size()) + " positions but " +
              std::to_string(pc.colors.size()) + " colors");
}

/// Maps model units into the unit cube used by the folding grid.
struct NormalizeTransform {
  Vec3 centroid;
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - centroid) / scale; }
  Vec3 invert(const Vec3& q) const { return q * scale + centroid; }
};

inline NormalizeTransform fit_normalization(std::span<const Vec3> positions) {
  validate_positions(positions);
  Vec3 sum;
  for (const Vec3& p : positions) sum += p;
  NormalizeTransform t;
  t.centroid = sum / static_cast<double>(positions.size());
  double max_abs = 0.0;
  for (const Vec3& p : positions) {
    const Vec3 d = p - t.centroid;
    max_abs = std::max({max_abs, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
  }
  t.scale = max_abs > 0.0 ? max_abs : 1.0;
  return t;
}

inline std::vector<Vec3> transform_positions(const NormalizeTransform& t, std::span<const Vec3> positions) {
  std::vector<Vec3> out;
  out.reserve(positions.size());
  for (const Vec3& p : positions) out.push_back(t.apply(p));
  return out;
}

/// Centers on the centroid and scales so the largest absolute coordinate is 1.
/// An all-equal cloud maps to the origin with scale 1.
inline std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& pc) {
  const NormalizeTransform t = fit_normalization(pc.positions);
  PointCloud out;
  out.positions = transform_positions(t, pc.positions);
  out.colors = pc.colors;
  return {std::move(out), t};
}

struct Patch {
  PointCloud cloud;
  std::vector<std::size_t> indices;  // position in the original cloud
};

namespace detail {

inline void split_recursive(std::span<const Vec3> positions, std::vector<std::size_t> indices,
                            std::size_t max_points, std::vector<std::vector<std::size_t>>& out) {
  if (indices.size() <= max_points) {
    out.push_back(std::move(indices));
    return;
  }
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi = -1.0 * lo;
  for (std::size_t i : indices) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], positions[i][a]);
      hi[a] = std::max(hi[a], positions[i][a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  std::stable_sort(indices.begin(), indices.end(), [&](std::size_t l, std::size_t r) {
    return positions[l][axis] < positions[r][axis];
  });
  const auto mid = indices.begin() + static_cast<std::ptrdiff_t>(indices.size() / 2);
  std::vector<std::size_t> left(indices.begin(), mid);
  std::vector<std::size_t> right(mid, indices.end());
  std::sort(left.begin(), left.end());
  std::sort(right.begin(), right.end());
  split_recursive(positions, std::move(left), max_points, out);
  split_recursive(positions, std::move(right), max_points, out);
}

}  // namespace detail

/// Median splits along the longest bounding-box axis until every patch holds at
/// most `max_points` points. Within a patch points keep their original order.
inline std::vector<Patch> segment_blocks(const PointCloud& pc, std::size_t max_points) {
  require(max_points >= 1, "max_points must be positive");
  std::vector<std::size_t> all(pc.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> groups;
  detail::split_recursive(pc.positions, std::move(all), max_points, groups);

  std::vector<Patch> patches;
  patches.reserve(groups.size());
  for (auto& group : groups) {
    Patch patch;
    patch.cloud.positions.reserve(group.size());
    for (std::size_t i : group) {
      patch.cloud.positions.push_back(pc.positions[i]);
      if (pc.has_colors()) patch.cloud.colors.push_back(pc.colors[i]);
    }
    patch.indices = std::move(group);
    patches.push_back(std::move(patch));
  }
  return patches;
}

/// Inverse of segment_blocks for per-point values.
template <typename T>
std::vector<T> reassemble(std::size_t n, std::span<const Patch> patches,
                          std::span<const std::vector<T>> per_patch) {
  require(patches.size() == per_patch.size(), "patch count mismatch");
  std::vector<T> out(n);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    require(per_patch[p].size() == patches[p].indices.size(), "patch size mismatch");
    for (std::size_t j = 0; j < per_patch[p].size(); ++j) out[patches[p].indices[j]] = per_patch[p][j];
  }
  return out;
}

}  // namespace foldpc
