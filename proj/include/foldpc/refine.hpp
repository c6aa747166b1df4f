// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/spatial_index.hpp"

// Folding refinement: each folded point is attracted to a density-weighted
// average of its grid neighbours (grid structure preservation) and to a
// push/pull pair of targets in the original cloud.

namespace foldpc {

struct RefineConfig {
  double alpha = 1.0 / 3.0;  // weight of the grid-preservation target
  std::uint32_t iterations = 100;

  friend bool operator==(const RefineConfig&, const RefineConfig&) = default;
};

struct RefineForces {
  std::vector<Vec3> grid_target;
  std::vector<Vec3> push_target;
  std::vector<Vec3> pull_target;
  std::vector<double> raw_weights;
  std::vector<double> weights;  // min-max normalized to [0,1]
};

/// w_i = mean distance from x~_i to the folded positions of its grid neighbours.
inline std::vector<double> inverse_density_weights(std::span<const Vec3> recon, std::size_t width,
                                                   std::size_t height) {
  require(recon.size() == width * height, "reconstruction is not aligned with the grid");
  std::vector<double> w(recon.size(), 0.0);
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const GridNeighbors nb = grid_neighbors(width, height, i);
    if (nb.count == 0) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < nb.count; ++k) sum += distance(recon[i], recon[nb.cells[k]]);
    w[i] = sum / static_cast<double>(nb.count);
  }
  return w;
}

/// (w - min) / (max - min); all ones when every weight is equal.
inline std::vector<double> normalize_weights(std::span<const double> raw) {
  require(!raw.empty(), "cannot normalize an empty weight set");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 1.0);
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  }
  return out;
}

/// Weighted mean of the grid neighbours' folded positions; falls back to the
/// plain neighbour mean when every neighbour weight is zero.
inline std::vector<Vec3> grid_attractor(std::span<const Vec3> recon, std::size_t width, std::size_t height,
                                        std::span<const double> weights) {
  require(recon.size() == width * height && weights.size() == recon.size(), "grid attractor inputs misaligned");
  std::vector<Vec3> out(recon.size());
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const GridNeighbors nb = grid_neighbors(width, height, i);
    if (nb.count == 0) {
      out[i] = recon[i];
      continue;
    }
    Vec3 weighted;
    Vec3 plain;
    double total = 0.0;
    for (std::size_t k = 0; k < nb.count; ++k) {
      const std::size_t j = nb.cells[k];
      weighted += weights[j] * recon[j];
      plain += recon[j];
      total += weights[j];
    }
    out[i] = total > 0.0 ? weighted / total : plain / static_cast<double>(nb.count);
  }
  return out;
}

/// Nearest original point of every folded point.
inline std::vector<Vec3> push_targets(std::span<const Vec3> recon, std::span<const Vec3> cloud,
                                      const SpatialIndex& cloud_index, const Execution& exec = {}) {
  require(!recon.empty() && !cloud.empty(), "push targets need nonempty sets");
  std::vector<Vec3> out(recon.size());
  parallel_for(recon.size(), exec, [&](std::size_t i) { out[i] = cloud[cloud_index.nearest_one(recon[i]).index]; });
  return out;
}

inline std::vector<Vec3> push_targets(std::span<const Vec3> recon, std::span<const Vec3> cloud) {
  return push_targets(recon, cloud, SpatialIndex(cloud));
}

/// Mean of the original points whose nearest folded point is x~_i; x~_i's push
/// target when no original point selects it.
inline std::vector<Vec3> pull_targets(std::span<const Vec3> recon, std::span<const Vec3> cloud,
                                      std::span<const Vec3> push, const Execution& exec = {}) {
  require(!recon.empty() && !cloud.empty() && push.size() == recon.size(), "pull targets inputs misaligned");
  const SpatialIndex recon_index(recon);
  std::vector<std::size_t> owner(cloud.size());
  parallel_for(cloud.size(), exec, [&](std::size_t p) { owner[p] = recon_index.nearest_one(cloud[p]).index; });
  std::vector<Vec3> sum(recon.size());
  std::vector<std::size_t> count(recon.size(), 0);
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    sum[owner[p]] += cloud[p];
    ++count[owner[p]];
  }
  std::vector<Vec3> out(recon.size());
  for (std::size_t i = 0; i < recon.size(); ++i)
    out[i] = count[i] > 0 ? sum[i] / static_cast<double>(count[i]) : push[i];
  return out;
}

inline std::vector<Vec3> pull_targets(std::span<const Vec3> recon, std::span<const Vec3> cloud) {
  const std::vector<Vec3> push = push_targets(recon, cloud);
  return pull_targets(recon, cloud, push);
}

inline RefineForces compute_forces(std::span<const Vec3> recon, std::span<const Vec3> cloud,
                                   const SpatialIndex& cloud_index, std::size_t width, std::size_t height,
                                   const Execution& exec = {}) {
  RefineForces f;
  f.raw_weights = inverse_density_weights(recon, width, height);
  f.weights = normalize_weights(f.raw_weights);
  f.grid_target = grid_attractor(recon, width, height, f.weights);
  f.push_target = push_targets(recon, cloud, cloud_index, exec);
  f.pull_target = pull_targets(recon, cloud, f.push_target, exec);
  return f;
}

/// x~' = alpha * p_grid + (1 - alpha) * (p_push + p_pull) / 2, every target
/// computed from the current positions.
inline std::vector<Vec3> refine_step(std::span<const Vec3> recon, std::span<const Vec3> cloud,
                                     const SpatialIndex& cloud_index, std::size_t width, std::size_t height,
                                     double alpha, const Execution& exec = {}) {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  const RefineForces f = compute_forces(recon, cloud, cloud_index, width, height, exec);
  std::vector<Vec3> next(recon.size());
  for (std::size_t i = 0; i < recon.size(); ++i)
    next[i] = alpha * f.grid_target[i] + (1.0 - alpha) * ((f.push_target[i] + f.pull_target[i]) / 2.0);
  return next;
}

inline std::vector<Vec3> refine_step(std::span<const Vec3> recon, std::span<const Vec3> cloud, const Grid& grid,
                                     double alpha, const Execution& exec = {}) {
  return refine_step(recon, cloud, SpatialIndex(cloud), grid.width, grid.height, alpha, exec);
}

inline std::vector<Vec3> refine(std::span<const Vec3> initial, std::span<const Vec3> cloud, const Grid& grid,
                                const RefineConfig& config, const Execution& exec = {}) {
  require(config.alpha >= 0.0 && config.alpha <= 1.0, "alpha must lie in [0, 1]");
  require(initial.size() == grid.size(), "reconstruction is not aligned with the grid");
  std::vector<Vec3> current(initial.begin(), initial.end());
  if (config.iterations == 0) return current;
  const SpatialIndex cloud_index(cloud);
  for (std::uint32_t t = 0; t < config.iterations; ++t)
    current = refine_step(current, cloud, cloud_index, grid.width, grid.height, config.alpha, exec);
  return current;
}

}  // namespace foldpc
