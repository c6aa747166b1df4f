// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "foldpc/attribute_mapping.hpp"
#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/parallel.hpp"

// Occupancy optimization by grid expansion: the row or column with the
// highest zero-excluded mean occupancy gets a new line inserted on each
// interior side, the mapping is rebuilt, and the loop repeats until the
// mapping is lossless or the improvement stalls.

namespace foldpc {

struct LineStats {
  std::vector<double> row_means;
  std::vector<double> col_means;

  friend bool operator==(const LineStats&, const LineStats&) = default;
};

/// Per-row and per-column mean of the strictly positive occupancies; 0 for a
/// line without any occupied cell.
inline LineStats occupancy_stats(std::span<const std::uint32_t> occupancy, std::size_t width, std::size_t height) {
  require(width >= 1 && height >= 1 && occupancy.size() == width * height, "occupancy grid has wrong size");
  LineStats s;
  s.row_means.assign(height, 0.0);
  s.col_means.assign(width, 0.0);
  std::vector<std::uint64_t> row_sum(height, 0), row_n(height, 0), col_sum(width, 0), col_n(width, 0);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::uint32_t o = occupancy[r * width + c];
      if (o == 0) continue;
      row_sum[r] += o;
      ++row_n[r];
      col_sum[c] += o;
      ++col_n[c];
    }
  }
  for (std::size_t r = 0; r < height; ++r)
    if (row_n[r] > 0) s.row_means[r] = static_cast<double>(row_sum[r]) / static_cast<double>(row_n[r]);
  for (std::size_t c = 0; c < width; ++c)
    if (col_n[c] > 0) s.col_means[c] = static_cast<double>(col_sum[c]) / static_cast<double>(col_n[c]);
  return s;
}

/// Average over all nonzero row and column means.
inline double average_mean_occupancy(const LineStats& s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* means : {&s.row_means, &s.col_means}) {
    for (double m : *means) {
      if (m > 0.0) {
        sum += m;
        ++n;
      }
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

struct LineChoice {
  bool is_row = true;
  std::size_t index = 0;  // in the grid as it was when selected

  friend bool operator==(const LineChoice&, const LineChoice&) = default;
};

/// Line with the maximum mean; ties prefer rows, then the lower index.
inline LineChoice select_line(const LineStats& s) {
  LineChoice best{true, 0};
  double best_mean = -1.0;
  for (std::size_t r = 0; r < s.row_means.size(); ++r) {
    if (s.row_means[r] > best_mean) {
      best = {true, r};
      best_mean = s.row_means[r];
    }
  }
  for (std::size_t c = 0; c < s.col_means.size(); ++c) {
    if (s.col_means[c] > best_mean) {
      best = {false, c};
      best_mean = s.col_means[c];
    }
  }
  return best;
}

/// A grid together with its folded positions; both are edited in lockstep.
struct FoldedGrid {
  Grid grid;
  std::vector<Vec3> recon;

  friend bool operator==(const FoldedGrid&, const FoldedGrid&) = default;
};

/// Inserts a midpoint line between the chosen line and each existing
/// neighbour line. A grid that is one line thick gets a duplicate line.
inline FoldedGrid insert_lines(const FoldedGrid& in, const LineChoice& choice) {
  const std::size_t w = in.grid.width;
  const std::size_t h = in.grid.height;
  require(in.recon.size() == w * h && in.grid.points.size() == w * h, "folded grid is inconsistent");
  const std::size_t lines = choice.is_row ? h : w;
  require(choice.index < lines, "selected line out of range");

  // Each new line is described by the pair of old lines it interpolates.
  struct Source {
    std::size_t a, b;
  };
  std::vector<Source> order;
  order.reserve(lines + 2);
  for (std::size_t l = 0; l < lines; ++l) {
    if (lines == 1) {
      order.push_back({l, l});
      order.push_back({l, l});
      continue;
    }
    if (l == choice.index && l > 0) order.push_back({l - 1, l});
    order.push_back({l, l});
    if (l == choice.index && l + 1 < lines) order.push_back({l, l + 1});
  }

  FoldedGrid out;
  const std::size_t nw = choice.is_row ? w : order.size();
  const std::size_t nh = choice.is_row ? order.size() : h;
  out.grid.width = nw;
  out.grid.height = nh;
  out.grid.points.resize(nw * nh);
  out.recon.resize(nw * nh);
  auto blend = [](const Vec3& p, const Vec3& q, bool same) { return same ? p : 0.5 * (p + q); };
  for (std::size_t r = 0; r < nh; ++r) {
    for (std::size_t c = 0; c < nw; ++c) {
      const Source s = order[choice.is_row ? r : c];
      const std::size_t ia = choice.is_row ? s.a * w + c : r * w + s.a;
      const std::size_t ib = choice.is_row ? s.b * w + c : r * w + s.b;
      out.grid.points[r * nw + c] = blend(in.grid.points[ia], in.grid.points[ib], s.a == s.b);
      out.recon[r * nw + c] = blend(in.recon[ia], in.recon[ib], s.a == s.b);
    }
  }
  return out;
}

enum class ExpansionStop { lossless, converged, no_improvement, max_rounds };

inline const char* to_string(ExpansionStop s) {
  switch (s) {
    case ExpansionStop::lossless: return "lossless";
    case ExpansionStop::converged: return "converged";
    case ExpansionStop::no_improvement: return "no_improvement";
    case ExpansionStop::max_rounds: return "max_rounds";
  }
  return "?";
}

struct ExpansionState {
  std::size_t width = 0;
  std::size_t height = 0;
  LineStats stats;                   // of the final mapping
  std::vector<double> averages;      // average mean occupancy after 0, 1, ... accepted rounds
  double last_relative_change = 0.0;
  double min_relative_change = 1e-6;
  std::vector<LineChoice> insertions;
  ExpansionStop stop = ExpansionStop::lossless;
};

struct ExpansionResult {
  FoldedGrid folded;
  MappingTable table;
  ExpansionState state;
};

/// Repeats select-line / insert / remap. Stops when the mapping is lossless,
/// when the relative decrease of the average mean occupancy drops below
/// `min_relative_change`, or after `max_rounds` accepted insertions. A round
/// that raises the average is discarded and ends the loop.
inline ExpansionResult expand_grid(const FoldedGrid& start, std::span<const Vec3> cloud, std::size_t k,
                                   double min_relative_change = 1e-6, std::uint32_t max_rounds = 64,
                                   const Execution& exec = {}) {
  ExpansionResult r;
  r.folded = start;
  r.table = build_mapping(cloud, r.folded.recon, r.folded.grid.width, r.folded.grid.height, k, exec);
  r.state.min_relative_change = min_relative_change;
  r.state.stats = occupancy_stats(r.table.occupancy, r.folded.grid.width, r.folded.grid.height);
  r.state.averages.push_back(average_mean_occupancy(r.state.stats));
  r.state.stop = ExpansionStop::max_rounds;

  while (true) {
    if (r.table.lossless()) {
      r.state.stop = ExpansionStop::lossless;
      break;
    }
    if (r.state.insertions.size() >= max_rounds) {
      r.state.stop = ExpansionStop::max_rounds;
      break;
    }
    const LineChoice choice = select_line(r.state.stats);
    FoldedGrid next = insert_lines(r.folded, choice);
    MappingTable table = build_mapping(cloud, next.recon, next.grid.width, next.grid.height, k, exec);
    LineStats stats = occupancy_stats(table.occupancy, next.grid.width, next.grid.height);
    const double before = r.state.averages.back();
    const double after = average_mean_occupancy(stats);
    const double change = before > 0.0 ? (before - after) / before : 0.0;
    r.state.last_relative_change = change;
    if (after > before) {
      r.state.stop = ExpansionStop::no_improvement;
      break;
    }
    r.folded = std::move(next);
    r.table = std::move(table);
    r.state.stats = std::move(stats);
    r.state.averages.push_back(after);
    r.state.insertions.push_back(choice);
    if (change < min_relative_change && !r.table.lossless()) {
      r.state.stop = ExpansionStop::converged;
      break;
    }
  }
  r.state.width = r.folded.grid.width;
  r.state.height = r.folded.grid.height;
  return r;
}

/// Re-applies a recorded insertion sequence.
inline FoldedGrid replay_expansion(const FoldedGrid& start, std::span<const LineChoice> insertions) {
  FoldedGrid g = start;
  for (const LineChoice& c : insertions) g = insert_lines(g, c);
  return g;
}

}  // namespace foldpc
