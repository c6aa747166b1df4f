// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force reference implementations used by the test suites and the
// `selftest` command. Nothing here shares code paths with the optimized
// implementations it checks: no spatial index, no shared codeword terms, no
// chunked reductions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "foldpc/folding_model.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/spatial_index.hpp"

namespace foldpc::oracle {

inline std::vector<Neighbor> exhaustive_knn(std::span<const Vec3> points, const Vec3& q, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) all.push_back({i, squared_distance(q, points[i])});
  std::sort(all.begin(), all.end(), closer);
  all.resize(std::min(k, all.size()));
  return all;
}

inline double pairwise_chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  double forward = 0.0;
  for (const Vec3& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : b) best = std::min(best, squared_distance(p, q));
    forward += best;
  }
  double backward = 0.0;
  for (const Vec3& q : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : a) best = std::min(best, squared_distance(q, p));
    backward += best;
  }
  return forward + backward;
}

inline double pairwise_repulsion(std::span<const Vec3> pts) {
  std::vector<double> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) best = std::min(best, squared_distance(pts[i], pts[j]));
    }
    d.push_back(best);
  }
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  return var / static_cast<double>(d.size());
}

namespace detail {

inline double weight(std::span<const double> params, const DenseLayout& d, std::size_t i, std::size_t o) {
  return params[d.weight_offset + i * d.out + o];
}

inline std::vector<double> affine(std::span<const double> params, const DenseLayout& d, const std::vector<double>& x) {
  std::vector<double> y(d.out);
  for (std::size_t o = 0; o < d.out; ++o) {
    double s = params[d.bias_offset + o];
    for (std::size_t i = 0; i < d.in; ++i) s += weight(params, d, i, o) * x[i];
    y[o] = s;
  }
  return y;
}

}  // namespace detail

/// Straight-line forward pass: per-point encoder, max pool, and both folding
/// layers with the codeword explicitly concatenated to every input.
inline std::vector<Vec3> reference_fold(const FoldingModel& model, std::span<const double> params,
                                        std::span<const Vec3> cloud, const Grid& grid) {
  const std::size_t width = model.dims.codeword_size();
  std::vector<double> y(width, -std::numeric_limits<double>::infinity());
  for (const Vec3& p : cloud) {
    std::vector<double> h{p.x, p.y, p.z};
    for (const DenseLayout& d : model.layout.encoder) {
      h = detail::affine(params, d, h);
      for (double& v : h) v = std::max(v, 0.0);
    }
    for (std::size_t k = 0; k < width; ++k) y[k] = std::max(y[k], h[k]);
  }
  auto folding_layer = [&](const std::vector<DenseLayout>& layers, const Vec3& u) {
    std::vector<double> h{u.x, u.y, u.z};
    h.insert(h.end(), y.begin(), y.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      h = detail::affine(params, layers[l], h);
      if (l + 1 < layers.size()) {
        for (double& v : h) v = v > 0.0 ? v : kLeakySlope * v;
      }
    }
    return Vec3{h[0], h[1], h[2]};
  };
  std::vector<Vec3> out;
  for (const Vec3& g : grid.points) {
    out.push_back(folding_layer(model.layout.fold_second, folding_layer(model.layout.fold_first, g)));
  }
  return out;
}

inline double reference_loss(const FoldingModel& model, std::span<const double> params, std::span<const Vec3> cloud,
                             const Grid& grid) {
  const std::vector<Vec3> recon = reference_fold(model, params, cloud, grid);
  double loss = pairwise_chamfer(cloud, recon);
  if (recon.size() >= 2) loss += pairwise_repulsion(recon);
  return loss;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t directions = 0;
};

/// Compares directional derivatives g.v against central differences of the
/// reference loss along random unit directions v.
inline GradientCheck finite_difference_check(const FoldingModel& model, std::span<const double> gradient,
                                             std::span<const Vec3> cloud, const Grid& grid, std::size_t directions,
                                             std::uint64_t seed, double step = 1e-6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  GradientCheck result;
  std::vector<double> v(model.params.size());
  std::vector<double> plus(model.params.size());
  std::vector<double> minus(model.params.size());
  for (std::size_t d = 0; d < directions; ++d) {
    double norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    double analytic = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] /= norm;
      analytic += gradient[k] * v[k];
      plus[k] = model.params[k] + step * v[k];
      minus[k] = model.params[k] - step * v[k];
    }
    const double numeric =
        (reference_loss(model, plus, cloud, grid) - reference_loss(model, minus, cloud, grid)) / (2.0 * step);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / scale);
    ++result.directions;
  }
  return result;
}

}  // namespace foldpc::oracle
