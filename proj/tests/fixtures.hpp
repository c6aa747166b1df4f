// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "foldpc/folding_model.hpp"
#include "foldpc/image_codec.hpp"
#include "foldpc/point_cloud.hpp"

// Synthetic coloured surfaces shared by the unit and acceptance suites.

namespace foldpc::fixtures {

inline std::uint8_t channel(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

/// Smooth colour field with a few periods across the unit cube.
inline Rgb texture(const Vec3& p) {
  return {channel(128.0 + 100.0 * std::sin(4.0 * p.x + 1.0)), channel(128.0 + 90.0 * std::cos(5.0 * p.y - 0.5)),
          channel(128.0 + 80.0 * std::sin(3.0 * (p.x + p.y + p.z)))};
}

inline PointCloud colorize(std::vector<Vec3> positions) {
  PointCloud pc;
  pc.positions = std::move(positions);
  for (const Vec3& p : pc.positions) pc.colors.push_back(texture(p));
  return pc;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

inline PointCloud plane(std::size_t n = 1000, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {uniform(rng, -1, 1), uniform(rng, -1, 1), 0.0};
  return colorize(std::move(pts));
}

/// Upper unit hemisphere, uniform by area.
inline PointCloud hemisphere(std::size_t n = 1000, std::uint64_t seed = 12) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    const double z = uniform(rng, 0, 1);
    const double phi = uniform(rng, 0, 2 * std::numbers::pi);
    const double r = std::sqrt(1 - z * z);
    p = {r * std::cos(phi), r * std::sin(phi), z};
  }
  return colorize(std::move(pts));
}

/// Two unit squares meeting at a right angle along the y axis.
inline PointCloud corner(std::size_t n = 1000, std::uint64_t seed = 13) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = uniform(rng, 0, 1);
    const double b = uniform(rng, -0.5, 0.5);
    pts[i] = i % 2 == 0 ? Vec3{a, b, 0.0} : Vec3{0.0, b, a};
  }
  return colorize(std::move(pts));
}

struct Named {
  std::string name;
  PointCloud cloud;
};

inline std::vector<Named> all(std::size_t n = 1000) {
  return {{"plane", plane(n)}, {"hemisphere", hemisphere(n)}, {"corner", corner(n)}};
}

/// External codec from FOLDPC_BPGENC/FOLDPC_BPGDEC, falling back to the
/// bundled shims when the build found ffmpeg.
inline ExternalCodec test_codec() {
  ExternalCodec tools = ExternalCodec::from_environment();
#if defined(FOLDPC_TEST_BPGENC) && defined(FOLDPC_TEST_BPGDEC)
  if (!tools.available()) {
    tools.encoder = FOLDPC_TEST_BPGENC;
    tools.decoder = FOLDPC_TEST_BPGDEC;
  }
#endif
  return tools;
}

}  // namespace foldpc::fixtures
