// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <sys/wait.h>
#include <vector>

#include "foldpc/attribute_mapping.hpp"
#include "foldpc/error.hpp"

namespace foldpc {

enum class CodecId : std::uint8_t { lossless = 0, external_bpg = 1 };

inline const char* to_string(CodecId id) { return id == CodecId::lossless ? "lossless" : "bpg"; }

struct CodecChoice {
  CodecId id = CodecId::lossless;
  std::uint8_t qp = 0;  // only meaningful for external_bpg, in [0, 51]

  static CodecChoice lossless() { return {CodecId::lossless, 0}; }
  static CodecChoice bpg(int qp) {
    require(qp >= 0 && qp <= 51, "QP must lie in [0, 51], got " + std::to_string(qp));
    return {CodecId::external_bpg, static_cast<std::uint8_t>(qp)};
  }

  friend bool operator==(const CodecChoice&, const CodecChoice&) = default;
};

/// QPs of the standard rate-distortion sweep.
inline std::vector<int> default_qp_sweep() { return {20, 25, 30, 35, 40, 45, 50}; }

struct CompressedImage {
  CodecChoice codec;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> payload;

  std::size_t payload_length() const { return payload.size(); }
};

namespace codec_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline constexpr std::array<std::uint8_t, 4> kLosslessMagic{'F', 'P', 'L', 'B'};
inline constexpr std::size_t kLosslessHeader = 16;

inline std::vector<std::uint8_t> raw_rgb(const AttributeImage& image) {
  std::vector<std::uint8_t> raw;
  raw.reserve(image.pixels.size() * 3);
  for (const Rgb& p : image.pixels) {
    raw.push_back(p.r);
    raw.push_back(p.g);
    raw.push_back(p.b);
  }
  return raw;
}

/// Payload: "FPLB", u32 width, u32 height, u32 raw size (little-endian), then
/// a zlib-wrapped deflate stream of the RGB rows.
inline std::vector<std::uint8_t> lossless_compress(const AttributeImage& image) {
  const std::vector<std::uint8_t> raw = raw_rgb(image);
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(kLosslessMagic.begin(), kLosslessMagic.end());
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(raw.size()));
  out.resize(kLosslessHeader + bound);
  if (compress2(out.data() + kLosslessHeader, &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    fail(ErrorKind::io, "deflate failed");
  out.resize(kLosslessHeader + bound);
  return out;
}

inline std::vector<Rgb> lossless_decompress(std::span<const std::uint8_t> payload, std::uint32_t& width,
                                            std::uint32_t& height) {
  if (payload.size() < kLosslessHeader || !std::equal(kLosslessMagic.begin(), kLosslessMagic.end(), payload.begin()))
    fail(ErrorKind::parse, "lossless payload has no valid header");
  width = get_u32(payload.data() + 4);
  height = get_u32(payload.data() + 8);
  const std::uint32_t raw_size = get_u32(payload.data() + 12);
  if (static_cast<std::uint64_t>(width) * height * 3 != raw_size) fail(ErrorKind::parse, "lossless payload size mismatch");
  std::vector<std::uint8_t> raw(raw_size);
  uLongf got = raw_size;
  const int rc = uncompress(raw.data(), &got, payload.data() + kLosslessHeader,
                            static_cast<uLong>(payload.size() - kLosslessHeader));
  if (rc != Z_OK || got != raw_size) fail(ErrorKind::parse, "corrupt or truncated lossless payload");
  std::vector<Rgb> pixels(raw_size / 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  return pixels;
}

// --- external codec plumbing ------------------------------------------------

class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 16; ++attempt) {
      path_ = base / ("foldpc-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
                      std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) return;
    }
    fail(ErrorKind::io, "cannot create a temporary directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

/// Locates an executable: paths containing '/' are used as-is, bare names are
/// searched on PATH.
inline std::optional<std::filesystem::path> find_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return std::filesystem::path(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (path == nullptr) return std::nullopt;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) dir = ".";
    const auto candidate = std::filesystem::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && !std::filesystem::is_directory(candidate)) return candidate;
  }
  return std::nullopt;
}

struct ProcessResult {
  int exit_code = -1;
  std::string output;
};

inline ProcessResult run_command(const std::string& command) {
  ProcessResult r;
  FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) fail(ErrorKind::external_codec, "cannot spawn: " + command);
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) r.output += buf.data();
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline void write_png(const std::filesystem::path& path, const AttributeImage& image) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) fail(ErrorKind::io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorKind::io, "libpng initialization failed");
  }
  const std::vector<std::uint8_t> raw = raw_rgb(image);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorKind::io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < image.height; ++r)
    png_write_row(png, const_cast<png_bytep>(raw.data() + r * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

/// Binary PPM (P6, maxval 255).
inline std::vector<Rgb> read_ppm(const std::filesystem::path& path, std::uint32_t& width, std::uint32_t& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::external_codec, "decoder produced no image at " + path.string());
  auto token = [&]() {
    std::string t;
    while (t.empty()) {
      int c = in.get();
      if (c == EOF) fail(ErrorKind::external_codec, "truncated PPM header");
      if (c == '#') {
        std::string ignored;
        std::getline(in, ignored);
        continue;
      }
      while (c != EOF && !std::isspace(c)) {
        t.push_back(static_cast<char>(c));
        c = in.get();
      }
    }
    return t;
  };
  if (token() != "P6") fail(ErrorKind::external_codec, "decoder output is not a binary PPM");
  width = static_cast<std::uint32_t>(std::stoul(token()));
  height = static_cast<std::uint32_t>(std::stoul(token()));
  if (std::stoul(token()) != 255) fail(ErrorKind::external_codec, "decoder output is not 8-bit");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width) * height * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    fail(ErrorKind::external_codec, "truncated PPM body");
  std::vector<Rgb> pixels(raw.size() / 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  return pixels;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::external_codec, "encoder produced no output at " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
}

}  // namespace codec_detail

/// Command names of the external codec. Environment overrides:
/// FOLDPC_BPGENC and FOLDPC_BPGDEC (name on PATH or explicit path).
struct ExternalCodec {
  std::string encoder = "bpgenc";
  std::string decoder = "bpgdec";

  static ExternalCodec from_environment() {
    ExternalCodec c;
    if (const char* e = std::getenv("FOLDPC_BPGENC"); e != nullptr && *e != '\0') c.encoder = e;
    if (const char* d = std::getenv("FOLDPC_BPGDEC"); d != nullptr && *d != '\0') c.decoder = d;
    return c;
  }

  bool available() const {
    return codec_detail::find_executable(encoder).has_value() && codec_detail::find_executable(decoder).has_value();
  }
};

namespace codec_detail {

inline std::filesystem::path require_executable(const std::string& name) {
  auto path = find_executable(name);
  if (!path) fail(ErrorKind::external_codec, "external codec binary '" + name + "' not found");
  return *path;
}

inline std::vector<std::uint8_t> bpg_compress(const AttributeImage& image, int qp, const ExternalCodec& tools) {
  const auto encoder = require_executable(tools.encoder);
  TempDir dir;
  const auto input = dir.path() / "image.png";
  const auto output = dir.path() / "image.bpg";
  write_png(input, image);
  const std::string cmd = shell_quote(encoder.string()) + " -q " + std::to_string(qp) + " -f 444 -o " +
                          shell_quote(output.string()) + " " + shell_quote(input.string());
  const ProcessResult r = run_command(cmd);
  if (r.exit_code != 0)
    fail(ErrorKind::external_codec,
         "'" + tools.encoder + "' exited with status " + std::to_string(r.exit_code) + ": " + r.output);
  return read_bytes(output);
}

inline std::vector<Rgb> bpg_decompress(std::span<const std::uint8_t> payload, const ExternalCodec& tools,
                                       std::uint32_t& width, std::uint32_t& height) {
  const auto decoder = require_executable(tools.decoder);
  TempDir dir;
  const auto input = dir.path() / "image.bpg";
  const auto output = dir.path() / "image.ppm";
  write_bytes(input, payload);
  const std::string cmd =
      shell_quote(decoder.string()) + " -o " + shell_quote(output.string()) + " " + shell_quote(input.string());
  const ProcessResult r = run_command(cmd);
  if (r.exit_code != 0)
    fail(ErrorKind::external_codec,
         "'" + tools.decoder + "' exited with status " + std::to_string(r.exit_code) + ": " + r.output);
  return read_ppm(output, width, height);
}

}  // namespace codec_detail

inline CompressedImage compress(const AttributeImage& image, const CodecChoice& choice,
                                const ExternalCodec& tools = ExternalCodec::from_environment()) {
  require(image.width >= 1 && image.height >= 1 && image.pixels.size() == image.width * image.height,
          "image dimensions do not match its pixel count");
  CompressedImage out;
  out.codec = choice;
  out.width = static_cast<std::uint32_t>(image.width);
  out.height = static_cast<std::uint32_t>(image.height);
  if (choice.id == CodecId::lossless) {
    out.payload = codec_detail::lossless_compress(image);
  } else {
    require(choice.qp <= 51, "QP must lie in [0, 51]");
    out.payload = codec_detail::bpg_compress(image, choice.qp, tools);
  }
  return out;
}

/// Pixels of a compressed image; dimensions always equal the encoded ones.
inline AttributeImage decompress(const CompressedImage& blob,
                                 const ExternalCodec& tools = ExternalCodec::from_environment()) {
  AttributeImage img;
  std::uint32_t w = 0, h = 0;
  if (blob.codec.id == CodecId::lossless) {
    img.pixels = codec_detail::lossless_decompress(blob.payload, w, h);
  } else {
    img.pixels = codec_detail::bpg_decompress(blob.payload, tools, w, h);
  }
  if (w != blob.width || h != blob.height)
    fail(ErrorKind::external_codec, "decoded image is " + std::to_string(w) + "x" + std::to_string(h) +
                                        ", expected " + std::to_string(blob.width) + "x" + std::to_string(blob.height));
  img.width = w;
  img.height = h;
  return img;
}

}  // namespace foldpc
