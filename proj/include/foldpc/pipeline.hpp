// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "foldpc/attribute_mapping.hpp"
#include "foldpc/bitstream.hpp"
#include "foldpc/error.hpp"
#include "foldpc/expansion.hpp"
#include "foldpc/image_codec.hpp"
#include "foldpc/metrics.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/point_cloud.hpp"
#include "foldpc/refine.hpp"
#include "foldpc/training.hpp"

// Encoder and decoder share reconstruct_patch: the decoder sees only the
// geometry and the header, reruns the same deterministic stages and must land
// on the same grid, which the header dimensions and checksum confirm.

namespace foldpc {

inline void validate(const PipelineConfig& c) {
  require(c.k >= 1, "k must be positive");
  require(c.refine.alpha >= 0.0 && c.refine.alpha <= 1.0, "alpha must lie in [0, 1]");
  require(c.min_relative_change >= 0.0, "minimum relative change must be non-negative");
  require(c.codec.qp <= 51, "QP must lie in [0, 51]");
  require(c.train.learning_rate > 0.0 && c.train.epsilon > 0.0 && c.train.beta1 >= 0.0 && c.train.beta1 < 1.0 &&
              c.train.beta2 >= 0.0 && c.train.beta2 < 1.0,
          "invalid optimizer settings");
}

/// Rounds every coordinate to float32, the precision the checksum and the PLY
/// files carry, so encoder and decoder start from identical values.
inline std::vector<Vec3> to_float_precision(std::span<const Vec3> positions) {
  std::vector<Vec3> out;
  out.reserve(positions.size());
  for (const Vec3& p : positions)
    out.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)});
  return out;
}

namespace pipeline_detail {

template <typename Fn>
decltype(auto) stage(const char* name, std::size_t patch, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.kind(), "patch " + std::to_string(patch) + ", stage " + name + ": " + e.what());
  }
}

inline std::vector<Patch> split(const PointCloud& pc, std::uint32_t max_points) {
  if (max_points > 0) return segment_blocks(pc, max_points);
  Patch whole;
  whole.cloud = pc;
  whole.indices.resize(pc.size());
  std::iota(whole.indices.begin(), whole.indices.end(), std::size_t{0});
  return {std::move(whole)};
}

/// Patches run concurrently; the leftover thread budget goes to the kernels.
template <typename Fn>
void for_each_patch(std::size_t patches, const Execution& exec, Fn&& fn) {
  const unsigned threads = std::max(1u, exec.threads);
  const unsigned outer = static_cast<unsigned>(std::min<std::size_t>(threads, patches));
  const Execution inner{std::max(1u, threads / std::max(1u, outer))};
  parallel_tasks(patches, Execution{outer}, [&](std::size_t p) { fn(p, inner); });
}

}  // namespace pipeline_detail

/// Everything derivable from a patch's geometry and the configuration.
struct PatchGeometry {
  NormalizeTransform transform;
  std::vector<Vec3> cloud;  // normalized positions
  TrainResult training;
  std::vector<Vec3> refined;
  FoldedGrid mapped;  // grid and folded positions the final mapping uses
  MappingTable table;
  ExpansionState expansion;
  std::size_t k = 0;  // neighbours actually used, k clamped to the grid size
};

inline PatchGeometry reconstruct_patch(std::span<const Vec3> positions, const PipelineConfig& config,
                                       std::size_t patch = 0, const Execution& exec = {}) {
  using pipeline_detail::stage;
  PatchGeometry g;
  stage("normalize", patch, [&] {
    validate_positions(positions);
    g.transform = fit_normalization(positions);
    g.cloud = transform_positions(g.transform, positions);
  });
  g.training = stage("train", patch, [&] { return train(g.cloud, config.train, exec); });
  const Grid& grid = g.training.grid;
  g.k = std::min<std::size_t>(config.k, grid.size());
  if (config.stage == Stage::folded) {
    g.refined = g.training.reconstruction;
  } else {
    g.refined = stage("refine", patch, [&] { return refine(g.training.reconstruction, g.cloud, grid, config.refine, exec); });
  }
  g.mapped = {grid, config.stage == Stage::folded ? g.training.reconstruction : g.refined};
  if (config.stage == Stage::optimized) {
    ExpansionResult r = stage("expand_grid", patch, [&] {
      return expand_grid(g.mapped, g.cloud, g.k, config.min_relative_change, config.max_rounds, exec);
    });
    g.mapped = std::move(r.folded);
    g.table = std::move(r.table);
    g.expansion = std::move(r.state);
  } else {
    g.table = stage("build_mapping", patch, [&] { return build_mapping(g.cloud, g.mapped.recon, grid, g.k, exec); });
    g.expansion.width = grid.width;
    g.expansion.height = grid.height;
    g.expansion.stats = occupancy_stats(g.table.occupancy, grid.width, grid.height);
    g.expansion.averages = {average_mean_occupancy(g.expansion.stats)};
    g.expansion.min_relative_change = config.min_relative_change;
    g.expansion.stop = g.table.lossless() ? ExpansionStop::lossless : ExpansionStop::max_rounds;
  }
  return g;
}

/// A cloud carried up to the attribute images, before any image coding.
struct PreparedCloud {
  PipelineConfig config;
  PointCloud cloud;  // float32-rounded positions, original colours
  std::vector<Patch> patches;
  std::vector<PatchGeometry> geometry;
  std::vector<AttributeImage> images;
};

inline PreparedCloud prepare(const PointCloud& pc, const PipelineConfig& config, const Execution& exec = {}) {
  validate(config);
  validate(pc);
  require(pc.has_colors(), "encoding needs a coloured cloud");
  PreparedCloud out;
  out.config = config;
  out.cloud.positions = to_float_precision(pc.positions);
  out.cloud.colors = pc.colors;
  out.patches = pipeline_detail::split(out.cloud, config.max_points);
  out.geometry.resize(out.patches.size());
  out.images.resize(out.patches.size());
  pipeline_detail::for_each_patch(out.patches.size(), exec, [&](std::size_t p, const Execution& inner) {
    PatchGeometry& g = out.geometry[p];
    g = reconstruct_patch(out.patches[p].cloud.positions, config, p, inner);
    out.images[p] = pipeline_detail::stage("map_attributes", p, [&] {
      return map_attributes(g.cloud, out.patches[p].cloud.colors, g.mapped.recon, g.table, g.mapped.grid.points, inner);
    });
  });
  return out;
}

/// Compresses every patch image with `codec` and assembles the bitstream.
inline Bitstream package(const PreparedCloud& prepared, const CodecChoice& codec,
                         const ExternalCodec& tools = ExternalCodec::from_environment()) {
  Bitstream bs;
  bs.config = prepared.config;
  bs.config.codec = codec;
  for (std::size_t p = 0; p < prepared.patches.size(); ++p) {
    const PatchGeometry& g = prepared.geometry[p];
    PatchRecord rec;
    rec.grid_width = static_cast<std::uint32_t>(g.training.grid.width);
    rec.grid_height = static_cast<std::uint32_t>(g.training.grid.height);
    rec.expanded_width = static_cast<std::uint32_t>(g.mapped.grid.width);
    rec.expanded_height = static_cast<std::uint32_t>(g.mapped.grid.height);
    rec.geometry_checksum = geometry_checksum(prepared.patches[p].cloud.positions);
    rec.payload = pipeline_detail::stage("compress", p, [&] { return compress(prepared.images[p], codec, tools).payload; });
    bs.patches.push_back(std::move(rec));
  }
  return bs;
}

struct EncodeResult {
  Bitstream bitstream;
  PreparedCloud prepared;
};

inline EncodeResult encode_detailed(const PointCloud& pc, const PipelineConfig& config, const Execution& exec = {},
                                    const ExternalCodec& tools = ExternalCodec::from_environment()) {
  EncodeResult r;
  r.prepared = prepare(pc, config, exec);
  r.bitstream = package(r.prepared, config.codec, tools);
  return r;
}

inline Bitstream encode(const PointCloud& pc, const PipelineConfig& config, const Execution& exec = {},
                        const ExternalCodec& tools = ExternalCodec::from_environment()) {
  return encode_detailed(pc, config, exec, tools).bitstream;
}

struct DecodeResult {
  std::vector<Rgb> colors;  // original point order
  std::vector<Patch> patches;
  std::vector<PatchGeometry> geometry;
  std::vector<AttributeImage> images;  // decompressed
};

inline DecodeResult decode_detailed(std::span<const Vec3> geometry, const Bitstream& bs, const Execution& exec = {},
                                    const ExternalCodec& tools = ExternalCodec::from_environment()) {
  validate(bs.config);
  PointCloud pc;
  pc.positions = to_float_precision(geometry);
  validate_positions(pc.positions);
  DecodeResult out;
  out.patches = pipeline_detail::split(pc, bs.config.max_points);
  if (out.patches.size() != bs.patches.size())
    fail(ErrorKind::checksum, "geometry splits into " + std::to_string(out.patches.size()) +
                                  " patches but the bitstream holds " + std::to_string(bs.patches.size()));
  for (std::size_t p = 0; p < out.patches.size(); ++p) {
    if (geometry_checksum(out.patches[p].cloud.positions) != bs.patches[p].geometry_checksum)
      fail(ErrorKind::checksum, "patch " + std::to_string(p) + ": geometry checksum mismatch");
  }

  out.geometry.resize(out.patches.size());
  out.images.resize(out.patches.size());
  std::vector<std::vector<Rgb>> per_patch(out.patches.size());
  pipeline_detail::for_each_patch(out.patches.size(), exec, [&](std::size_t p, const Execution& inner) {
    const PatchRecord& rec = bs.patches[p];
    PatchGeometry& g = out.geometry[p];
    g = reconstruct_patch(out.patches[p].cloud.positions, bs.config, p, inner);
    if (g.training.grid.width != rec.grid_width || g.training.grid.height != rec.grid_height ||
        g.mapped.grid.width != rec.expanded_width || g.mapped.grid.height != rec.expanded_height)
      fail(ErrorKind::determinism,
           "determinism violation in patch " + std::to_string(p) + ": reconstructed grid " +
               std::to_string(g.training.grid.width) + "x" + std::to_string(g.training.grid.height) + " -> " +
               std::to_string(g.mapped.grid.width) + "x" + std::to_string(g.mapped.grid.height) + ", header says " +
               std::to_string(rec.grid_width) + "x" + std::to_string(rec.grid_height) + " -> " +
               std::to_string(rec.expanded_width) + "x" + std::to_string(rec.expanded_height));
    const CompressedImage blob{bs.config.codec, rec.expanded_width, rec.expanded_height, rec.payload};
    out.images[p] = pipeline_detail::stage("decompress", p, [&] { return decompress(blob, tools); });
    per_patch[p] = pipeline_detail::stage("decode_attributes", p, [&] { return decode_attributes(out.images[p], g.table); });
  });
  out.colors = reassemble<Rgb>(pc.size(), out.patches, per_patch);
  return out;
}

inline std::vector<Rgb> decode(std::span<const Vec3> geometry, const Bitstream& bs, const Execution& exec = {},
                               const ExternalCodec& tools = ExternalCodec::from_environment()) {
  return decode_detailed(geometry, bs, exec, tools).colors;
}

using OccupancyHistogram = std::map<std::uint32_t, std::size_t>;  // occupancy -> cell count

inline OccupancyHistogram occupancy_histogram(std::span<const std::uint32_t> occupancy) {
  OccupancyHistogram h;
  for (std::uint32_t o : occupancy) ++h[o];
  return h;
}

struct StageReport {
  Stage stage = Stage::folded;
  double y_psnr = 0.0;
  std::size_t cells = 0;
  OccupancyHistogram histogram;
};

struct AblationReport {
  std::array<StageReport, 3> stages;
  std::vector<PatchGeometry> geometry;
};

/// Mapping-only Y-PSNR (no image codec) after the initial fold, after
/// refinement and after grid expansion, from a single training run per patch.
inline AblationReport run_stage_ablation(const PointCloud& pc, const PipelineConfig& config, const Execution& exec = {}) {
  PipelineConfig full = config;
  full.stage = Stage::optimized;
  validate(full);
  validate(pc);
  require(pc.has_colors(), "ablation needs a coloured cloud");
  PointCloud cloud;
  cloud.positions = to_float_precision(pc.positions);
  cloud.colors = pc.colors;
  const std::vector<Patch> patches = pipeline_detail::split(cloud, full.max_points);

  AblationReport report;
  report.geometry.resize(patches.size());
  std::array<std::vector<std::vector<Rgb>>, 3> decoded;
  std::array<std::vector<std::vector<std::uint32_t>>, 3> occupancies;
  for (std::size_t s = 0; s < 3; ++s) {
    decoded[s].resize(patches.size());
    occupancies[s].resize(patches.size());
  }
  pipeline_detail::for_each_patch(patches.size(), exec, [&](std::size_t p, const Execution& inner) {
    PatchGeometry& g = report.geometry[p];
    g = reconstruct_patch(patches[p].cloud.positions, full, p, inner);
    const Grid& grid = g.training.grid;
    const std::array<std::pair<FoldedGrid, MappingTable>, 3> stages{{
        {FoldedGrid{grid, g.training.reconstruction}, build_mapping(g.cloud, g.training.reconstruction, grid, g.k, inner)},
        {FoldedGrid{grid, g.refined}, build_mapping(g.cloud, g.refined, grid, g.k, inner)},
        {g.mapped, g.table},
    }};
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& [folded, table] = stages[s];
      const AttributeImage img =
          map_attributes(g.cloud, patches[p].cloud.colors, folded.recon, table, folded.grid.points, inner);
      decoded[s][p] = decode_attributes(img, table);
      occupancies[s][p] = table.occupancy;
    }
  });
  for (std::size_t s = 0; s < 3; ++s) {
    StageReport& r = report.stages[s];
    r.stage = static_cast<Stage>(s);
    const std::vector<Rgb> colors = reassemble<Rgb>(cloud.size(), patches, decoded[s]);
    r.y_psnr = y_psnr(cloud.colors, colors);
    for (const auto& occ : occupancies[s]) {
      r.cells += occ.size();
      for (const auto& [o, count] : occupancy_histogram(occ)) r.histogram[o] += count;
    }
  }
  return report;
}

struct RdPoint {
  int qp = 0;
  double bpp = 0.0;
  double y_psnr = 0.0;
  std::string stage;
};

struct RdOutcome {
  int qp = 0;
  std::optional<RdPoint> point;
  std::string error;  // set when this QP failed
};

/// One rate-distortion point per QP. The geometry side is reconstructed once;
/// each QP then only compresses, decompresses and reads back the images, which
/// gives the same result as a full encode/decode per QP.
inline std::vector<RdOutcome> rd_sweep(const PointCloud& pc, const PipelineConfig& config, std::span<const int> qps,
                                       const Execution& exec = {},
                                       const ExternalCodec& tools = ExternalCodec::from_environment()) {
  const PreparedCloud prepared = prepare(pc, config, exec);
  std::vector<RdOutcome> out(qps.size());
  parallel_tasks(qps.size(), exec, [&](std::size_t i) {
    RdOutcome& o = out[i];
    o.qp = qps[i];
    try {
      require(qps[i] >= 0 && qps[i] <= 51, "QP must lie in [0, 51]");
      const Bitstream bs = package(prepared, CodecChoice::bpg(qps[i]), tools);
      std::vector<std::vector<Rgb>> per_patch(prepared.patches.size());
      for (std::size_t p = 0; p < prepared.patches.size(); ++p) {
        const CompressedImage blob{bs.config.codec, bs.patches[p].expanded_width, bs.patches[p].expanded_height,
                                   bs.patches[p].payload};
        per_patch[p] = decode_attributes(decompress(blob, tools), prepared.geometry[p].table);
      }
      const std::vector<Rgb> colors = reassemble<Rgb>(prepared.cloud.size(), prepared.patches, per_patch);
      o.point = RdPoint{qps[i], bits_per_point(serialize(bs).size(), prepared.cloud.size()),
                        y_psnr(prepared.cloud.colors, colors), to_string(config.stage)};
    } catch (const Error& e) {
      o.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
  });
  return out;
}

}  // namespace foldpc
