// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "foldpc/attribute_mapping.hpp"
#include "foldpc/error.hpp"
#include "foldpc/expansion.hpp"
#include "foldpc/loss.hpp"
#include "foldpc/refine.hpp"
#include "foldpc/spatial_index.hpp"
#include "foldpc/testing/oracles.hpp"
#include "foldpc/training.hpp"

// Small oracle suite shipped with the library so an installed binary can check
// itself. The GoogleTest suite covers the same ground in more depth.

namespace foldpc {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selftest_detail {

inline bool near(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol && std::abs(a.z - b.z) <= tol;
}

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {unit_uniform(rng), unit_uniform(rng), unit_uniform(rng)};
  return pts;
}

}  // namespace selftest_detail

/// The toy model used for gradient checks: width-4 encoder and folding layers.
inline ModelDims toy_dims() {
  ModelDims d;
  d.encoder_widths = {4, 4, 4, 4};
  d.folding_widths = {4, 4};
  return d;
}

inline std::vector<SelfCheck> run_selftest() {
  using namespace selftest_detail;
  std::vector<SelfCheck> out;
  const auto check = [&](std::string name, const std::function<std::string()>& body) {
    SelfCheck c{std::move(name), false, {}};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = std::string("threw: ") + e.what();
    }
    out.push_back(std::move(c));
  };

  check("gradient matches central finite differences (toy model, 20 directions)", [] {
    const std::vector<Vec3> cloud{{0.1, 0.2, 0.0}, {0.8, -0.3, 0.1}, {-0.5, 0.4, 0.3}, {0.2, -0.7, -0.2}};
    const Grid grid = make_grid(2, 2);
    std::string failures;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const FoldingModel model = init_model(seed, toy_dims());
      const LossAndGrad lg = loss_and_grad(model, cloud, grid);
      const oracle::GradientCheck gc = oracle::finite_difference_check(model, lg.gradient, cloud, grid, 20, seed + 100);
      if (!(gc.max_relative_error < 1e-4))
        failures += "seed " + std::to_string(seed) + ": relative error " + std::to_string(gc.max_relative_error) + "; ";
    }
    return failures;
  });

  check("k-d tree equals exhaustive search (500 points, k in {1,5,9})", [] {
    const std::vector<Vec3> pts = random_points(500, 1);
    const std::vector<Vec3> queries = random_points(50, 2);
    const SpatialIndex index(pts);
    for (std::size_t k : {1u, 5u, 9u}) {
      for (const Vec3& q : queries) {
        const auto a = index.nearest(q, k);
        const auto b = oracle::exhaustive_knn(pts, q, k);
        for (std::size_t i = 0; i < k; ++i)
          if (a[i].index != b[i].index || a[i].squared_distance != b[i].squared_distance)
            return std::string("mismatch for k = ") + std::to_string(k);
      }
    }
    return std::string();
  });

  check("chamfer and repulsion equal the pairwise oracles", [] {
    const std::vector<Vec3> a = random_points(40, 3);
    const std::vector<Vec3> b = random_points(50, 4);
    if (std::abs(chamfer(a, b) - oracle::pairwise_chamfer(a, b)) > 1e-12) return std::string("chamfer differs");
    if (std::abs(repulsion(b) - oracle::pairwise_repulsion(b)) > 1e-12) return std::string("repulsion differs");
    if (chamfer(std::vector<Vec3>{{0, 0, 0}}, std::vector<Vec3>{{1, 0, 0}, {0, 1, 0}}) != 3.0)
      return std::string("hand example chamfer != 3");
    if (std::abs(repulsion(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}) - 2.0) > 1e-12)
      return std::string("hand example repulsion != 2");
    return std::string();
  });

  check("refinement hand examples", [] {
    const std::vector<Vec3> square{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    for (double w : inverse_density_weights(square, 2, 2))
      if (w != 1.0) return std::string("unit square weight != 1");
    std::vector<Vec3> stretched = square;
    stretched[1] = {2, 0, 0};
    if (std::abs(inverse_density_weights(stretched, 2, 2)[0] - 1.5) > 1e-12)
      return std::string("stretched corner weight != 1.5");
    const auto norm = normalize_weights(std::vector<double>{1, 2, 3});
    if (norm != std::vector<double>{0.0, 0.5, 1.0}) return std::string("normalized weights != {0, 0.5, 1}");
    // a 1x3 strip: the middle point's neighbours are (0,0,0) at 0.5 and (2,0,0) at 1
    const std::vector<Vec3> strip{{0, 0, 0}, {7, 7, 7}, {2, 0, 0}};
    const auto attractor = grid_attractor(strip, 3, 1, std::vector<double>{0.5, 0.0, 1.0});
    if (!near(attractor[1], {4.0 / 3.0, 0, 0})) return std::string("grid attractor != (4/3, 0, 0)");
    const std::vector<Vec3> cloud{{0, 0, 0}, {2, 0, 0}};
    if (!near(push_targets(std::vector<Vec3>{{0.9, 0, 0}}, cloud)[0], {0, 0, 0})) return std::string("push target");
    const auto pull = pull_targets(std::vector<Vec3>{{1, 0, 0}, {10, 10, 10}}, cloud);
    if (!near(pull[0], {1, 0, 0}) || !near(pull[1], {2, 0, 0})) return std::string("pull targets");
    return std::string();
  });

  check("greedy mapping hand trace", [] {
    const std::vector<Vec3> cloud{{0, 0, 0}, {0.1, 0, 0}};
    const std::vector<Vec3> recon{{0, 0, 0}, {5, 0, 0}};
    const MappingTable t = build_mapping(cloud, recon, 2, 1, 2);
    if (t.forward != std::vector<std::size_t>{0, 1}) return std::string("forward map != {0, 1}");
    if (t.occupancy != std::vector<std::uint32_t>{1, 1}) return std::string("occupancy != {1, 1}");
    return std::string();
  });

  check("occupancy statistics and line selection", [] {
    const std::vector<std::uint32_t> occ{2, 1, 0, 1};
    const LineStats s = occupancy_stats(occ, 2, 2);
    if (s.row_means != std::vector<double>{1.5, 1.0} || s.col_means != std::vector<double>{2.0, 1.0})
      return std::string("line means");
    if (select_line(s) != LineChoice{false, 0}) return std::string("expected column 0");
    return std::string();
  });

  return out;
}

}  // namespace foldpc
