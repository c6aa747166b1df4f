// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/image_codec.hpp"
#include "foldpc/refine.hpp"
#include "foldpc/training.hpp"

// Container layout (little-endian throughout), see docs/bitstream.md:
//
//   "FPCA" | u8 version | config block | u64 config hash | u32 patch count |
//   patch record*
//
//   patch record: u32 grid width | u32 grid height | u32 expanded width |
//                 u32 expanded height | u64 geometry checksum |
//                 u64 payload length | payload

namespace foldpc {

inline constexpr std::array<std::uint8_t, 4> kBitstreamMagic{'F', 'P', 'C', 'A'};
inline constexpr std::uint8_t kBitstreamVersion = 1;

/// Which mapping the image is built from: the initial fold, the refined fold,
/// or the refined fold after grid expansion.
enum class Stage : std::uint8_t { folded = 0, refined = 1, optimized = 2 };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::folded: return "folded";
    case Stage::refined: return "refined";
    case Stage::optimized: return "optimized";
  }
  return "?";
}

struct PipelineConfig {
  TrainConfig train;
  RefineConfig refine;
  std::uint32_t k = 9;
  double min_relative_change = 1e-6;
  std::uint32_t max_rounds = 64;
  CodecChoice codec;
  Stage stage = Stage::optimized;
  std::uint32_t max_points = 0;  // patch size limit; 0 disables segmentation

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct PatchRecord {
  std::uint32_t grid_width = 0;
  std::uint32_t grid_height = 0;
  std::uint32_t expanded_width = 0;
  std::uint32_t expanded_height = 0;
  std::uint64_t geometry_checksum = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct Bitstream {
  std::uint8_t version = kBitstreamVersion;
  PipelineConfig config;
  std::vector<PatchRecord> patches;

  friend bool operator==(const Bitstream&, const Bitstream&) = default;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// FNV-1a over the float32 little-endian bytes of x, y, z of every point.
inline std::uint64_t geometry_checksum(std::span<const Vec3> positions) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Vec3& p : positions) {
    for (double c : {p.x, p.y, p.z}) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(c));
      const std::array<std::uint8_t, 4> le{static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                                           static_cast<std::uint8_t>(bits >> 16), static_cast<std::uint8_t>(bits >> 24)};
      h = fnv1a(le, h);
    }
  }
  return h;
}

namespace bitstream_detail {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    if constexpr (std::is_same_v<T, double>) {
      put(std::bit_cast<std::uint64_t>(v));
    } else {
      for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void put_bytes(std::span<const std::uint8_t> b) { bytes.insert(bytes.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(get<std::uint64_t>());
    } else {
      need(sizeof(T));
      T v = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
      pos_ += sizeof(T);
      return v;
    }
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::parse, "bitstream truncated at byte " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> config_block(const PipelineConfig& c) {
  Writer w;
  w.put<std::uint32_t>(c.train.iterations);
  w.put<double>(c.train.learning_rate);
  w.put<double>(c.train.beta1);
  w.put<double>(c.train.beta2);
  w.put<double>(c.train.epsilon);
  w.put<std::uint64_t>(c.train.seed);
  w.put<double>(c.refine.alpha);
  w.put<std::uint32_t>(c.refine.iterations);
  w.put<std::uint32_t>(c.k);
  w.put<double>(c.min_relative_change);
  w.put<std::uint32_t>(c.max_rounds);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.codec.id));
  w.put<std::uint8_t>(c.codec.qp);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.stage));
  w.put<std::uint32_t>(c.max_points);
  return w.bytes;
}

inline constexpr std::size_t kConfigBlockSize = 4 + 8 * 5 + 8 + 4 + 4 + 8 + 4 + 1 + 1 + 1 + 4;

inline PipelineConfig read_config(Reader& r) {
  PipelineConfig c;
  c.train.iterations = r.get<std::uint32_t>();
  c.train.learning_rate = r.get<double>();
  c.train.beta1 = r.get<double>();
  c.train.beta2 = r.get<double>();
  c.train.epsilon = r.get<double>();
  c.train.seed = r.get<std::uint64_t>();
  c.refine.alpha = r.get<double>();
  c.refine.iterations = r.get<std::uint32_t>();
  c.k = r.get<std::uint32_t>();
  c.min_relative_change = r.get<double>();
  c.max_rounds = r.get<std::uint32_t>();
  const auto codec = r.get<std::uint8_t>();
  if (codec > static_cast<std::uint8_t>(CodecId::external_bpg)) fail(ErrorKind::parse, "unknown codec id " + std::to_string(codec));
  c.codec.id = static_cast<CodecId>(codec);
  c.codec.qp = r.get<std::uint8_t>();
  const auto stage = r.get<std::uint8_t>();
  if (stage > static_cast<std::uint8_t>(Stage::optimized)) fail(ErrorKind::parse, "unknown stage " + std::to_string(stage));
  c.stage = static_cast<Stage>(stage);
  c.max_points = r.get<std::uint32_t>();
  return c;
}

}  // namespace bitstream_detail

inline std::uint64_t config_hash(const PipelineConfig& c) { return fnv1a(bitstream_detail::config_block(c)); }

inline std::vector<std::uint8_t> serialize(const Bitstream& bs) {
  bitstream_detail::Writer w;
  w.put_bytes(kBitstreamMagic);
  w.put<std::uint8_t>(bs.version);
  const std::vector<std::uint8_t> block = bitstream_detail::config_block(bs.config);
  w.put_bytes(block);
  w.put<std::uint64_t>(fnv1a(block));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bs.patches.size()));
  for (const PatchRecord& p : bs.patches) {
    w.put<std::uint32_t>(p.grid_width);
    w.put<std::uint32_t>(p.grid_height);
    w.put<std::uint32_t>(p.expanded_width);
    w.put<std::uint32_t>(p.expanded_height);
    w.put<std::uint64_t>(p.geometry_checksum);
    w.put<std::uint64_t>(p.payload.size());
    w.put_bytes(p.payload);
  }
  return w.bytes;
}

inline Bitstream parse(std::span<const std::uint8_t> bytes) {
  bitstream_detail::Reader r(bytes);
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kBitstreamMagic.begin())) fail(ErrorKind::parse, "not a foldpc bitstream (bad magic)");
  Bitstream bs;
  bs.version = r.get<std::uint8_t>();
  if (bs.version != kBitstreamVersion)
    fail(ErrorKind::parse, "unsupported bitstream version " + std::to_string(bs.version));
  const std::size_t block_start = r.position();
  bs.config = bitstream_detail::read_config(r);
  const auto block = bytes.subspan(block_start, r.position() - block_start);
  if (r.get<std::uint64_t>() != fnv1a(block)) fail(ErrorKind::parse, "config block hash mismatch");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    PatchRecord p;
    p.grid_width = r.get<std::uint32_t>();
    p.grid_height = r.get<std::uint32_t>();
    p.expanded_width = r.get<std::uint32_t>();
    p.expanded_height = r.get<std::uint32_t>();
    p.geometry_checksum = r.get<std::uint64_t>();
    const auto length = r.get<std::uint64_t>();
    const auto payload = r.get_bytes(static_cast<std::size_t>(length));
    p.payload.assign(payload.begin(), payload.end());
    bs.patches.push_back(std::move(p));
  }
  if (!r.done()) fail(ErrorKind::parse, "trailing bytes after the last patch record");
  return bs;
}

}  // namespace foldpc
