// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/spatial_index.hpp"

namespace foldpc {

struct LossReport {
  double total = 0.0;
  double chamfer = 0.0;
  double repulsion = 0.0;
};

/// Nearest-neighbour pairings behind the Chamfer and repulsion terms.
struct Correspondences {
  std::vector<Neighbor> cloud_to_recon;  // per original point: closest folded point
  std::vector<Neighbor> recon_to_cloud;  // per folded point: closest original point
  std::vector<Neighbor> recon_to_recon;  // per folded point: closest other folded point (empty if |X~| < 2)
};

/// Closest point of `index` other than `self` itself.
inline Neighbor nearest_other(const SpatialIndex& index, const Vec3& q, std::size_t self) {
  for (const Neighbor& n : index.nearest(q, 2)) {
    if (n.index != self) return n;
  }
  fail(ErrorKind::invalid_argument, "nearest_other needs at least two points");
}

inline Correspondences correspond(std::span<const Vec3> cloud, const SpatialIndex& cloud_index,
                                  std::span<const Vec3> recon, const Execution& exec = {}) {
  require(!cloud.empty() && !recon.empty(), "correspondences need nonempty sets");
  const SpatialIndex recon_index(recon);
  Correspondences c;
  c.cloud_to_recon.resize(cloud.size());
  c.recon_to_cloud.resize(recon.size());
  parallel_for(cloud.size(), exec, [&](std::size_t p) { c.cloud_to_recon[p] = recon_index.nearest_one(cloud[p]); });
  parallel_for(recon.size(), exec, [&](std::size_t i) { c.recon_to_cloud[i] = cloud_index.nearest_one(recon[i]); });
  if (recon.size() >= 2) {
    c.recon_to_recon.resize(recon.size());
    parallel_for(recon.size(), exec,
                 [&](std::size_t i) { c.recon_to_recon[i] = nearest_other(recon_index, recon[i], i); });
  }
  return c;
}

inline double chamfer_from(const Correspondences& c) {
  double forward = 0.0;
  for (const Neighbor& n : c.cloud_to_recon) forward += n.squared_distance;
  double backward = 0.0;
  for (const Neighbor& n : c.recon_to_cloud) backward += n.squared_distance;
  return forward + backward;
}

inline double population_variance(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(values.size());
}

inline double repulsion_from(const Correspondences& c) {
  if (c.recon_to_recon.empty()) return 0.0;
  std::vector<double> d;
  d.reserve(c.recon_to_recon.size());
  for (const Neighbor& n : c.recon_to_recon) d.push_back(n.squared_distance);
  return population_variance(d);
}

/// Symmetric Chamfer distance: sum of squared nearest-neighbour distances in
/// both directions.
inline double chamfer(std::span<const Vec3> cloud, std::span<const Vec3> recon, const Execution& exec = {}) {
  require(!cloud.empty() && !recon.empty(), "chamfer needs nonempty sets");
  const SpatialIndex cloud_index(cloud);
  const SpatialIndex recon_index(recon);
  std::vector<double> forward(cloud.size());
  std::vector<double> backward(recon.size());
  parallel_for(cloud.size(), exec, [&](std::size_t p) { forward[p] = recon_index.nearest_one(cloud[p]).squared_distance; });
  parallel_for(recon.size(), exec, [&](std::size_t i) { backward[i] = cloud_index.nearest_one(recon[i]).squared_distance; });
  double a = 0.0;
  for (double v : forward) a += v;
  double b = 0.0;
  for (double v : backward) b += v;
  return a + b;
}

/// Population variance of each point's squared distance to its nearest other point.
inline double repulsion(std::span<const Vec3> recon, const Execution& exec = {}) {
  require(recon.size() >= 2, "repulsion needs at least two points");
  const SpatialIndex index(recon);
  std::vector<double> d(recon.size());
  parallel_for(recon.size(), exec, [&](std::size_t i) { d[i] = nearest_other(index, recon[i], i).squared_distance; });
  return population_variance(d);
}

/// dL/dX~ for L = chamfer + repulsion with the pairings held fixed.
inline std::vector<Vec3> loss_gradient_wrt_recon(std::span<const Vec3> cloud, std::span<const Vec3> recon,
                                                 const Correspondences& c) {
  std::vector<Vec3> g(recon.size());
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const std::size_t j = c.cloud_to_recon[p].index;
    g[j] += 2.0 * (recon[j] - cloud[p]);
  }
  for (std::size_t i = 0; i < recon.size(); ++i) g[i] += 2.0 * (recon[i] - cloud[c.recon_to_cloud[i].index]);
  if (!c.recon_to_recon.empty()) {
    const double n = static_cast<double>(recon.size());
    double sum = 0.0;
    for (const Neighbor& nb : c.recon_to_recon) sum += nb.squared_distance;
    const double mean = sum / n;
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const Neighbor& nb = c.recon_to_recon[i];
      const double coef = 2.0 * (nb.squared_distance - mean) / n;
      const Vec3 step = 2.0 * coef * (recon[i] - recon[nb.index]);
      g[i] += step;
      g[nb.index] += -1.0 * step;
    }
  }
  return g;
}

}  // namespace foldpc
