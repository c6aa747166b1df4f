// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"

namespace foldpc {

/// BT.709 luma.
inline double luma(const Rgb& c) { return 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b; }

/// PSNR of the luma channel with peak 255; +infinity for identical inputs.
inline double y_psnr(std::span<const Rgb> a, std::span<const Rgb> b) {
  if (a.size() != b.size())
    fail(ErrorKind::invalid_argument,
         "attribute lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  require(!a.empty(), "PSNR needs at least one attribute");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = luma(a[i]) - luma(b[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double bits_per_point(std::size_t bytes, std::size_t points) {
  require(points >= 1, "bits per point needs at least one point");
  return 8.0 * static_cast<double>(bytes) / static_cast<double>(points);
}

}  // namespace foldpc
