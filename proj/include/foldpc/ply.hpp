// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/point_cloud.hpp"

// PLY reader/writer for colored point clouds. Reads ASCII and
// binary_little_endian files with arbitrary extra elements and properties;
// writes x/y/z as float32 and red/green/blue as uint8.

namespace foldpc {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

enum class PlyFormat { ascii, binary_little_endian };

namespace ply_detail {

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::optional<Scalar> parse_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return Scalar::i8;
  if (name == "uchar" || name == "uint8") return Scalar::u8;
  if (name == "short" || name == "int16") return Scalar::i16;
  if (name == "ushort" || name == "uint16") return Scalar::u16;
  if (name == "int" || name == "int32") return Scalar::i32;
  if (name == "uint" || name == "uint32") return Scalar::u32;
  if (name == "float" || name == "float32") return Scalar::f32;
  if (name == "double" || name == "float64") return Scalar::f64;
  return std::nullopt;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8: return 1;
    case Scalar::i16:
    case Scalar::u16: return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32: return 4;
    case Scalar::f64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::f32;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  PlyFormat format = PlyFormat::ascii;
  std::vector<Element> elements;
};

[[noreturn]] inline void parse_error(std::size_t line, const std::string& what) {
  fail(ErrorKind::parse, "PLY header line " + std::to_string(line) + ": " + what);
}

inline Header read_header(std::istream& in) {
  Header header;
  std::string line;
  std::size_t line_no = 0;
  bool have_format = false;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") parse_error(1, "missing 'ply' magic");
  while (true) {
    if (!next_line()) parse_error(line_no + 1, "unexpected end of file before end_header");
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt, version;
      tokens >> fmt >> version;
      if (fmt == "ascii") {
        header.format = PlyFormat::ascii;
      } else if (fmt == "binary_little_endian") {
        header.format = PlyFormat::binary_little_endian;
      } else {
        parse_error(line_no, "unsupported format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      Element element;
      long long count = -1;
      tokens >> element.name >> count;
      if (element.name.empty() || !tokens || count < 0) parse_error(line_no, "malformed element line");
      element.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(element));
    } else if (keyword == "property") {
      if (header.elements.empty()) parse_error(line_no, "property before any element");
      Property prop;
      std::string type;
      tokens >> type;
      if (type == "list") {
        std::string count_type, item_type;
        tokens >> count_type >> item_type >> prop.name;
        auto ct = parse_scalar(count_type);
        auto it = parse_scalar(item_type);
        if (!ct || !it || prop.name.empty()) parse_error(line_no, "malformed list property");
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *it;
      } else {
        auto t = parse_scalar(type);
        tokens >> prop.name;
        if (!t || prop.name.empty()) parse_error(line_no, "malformed property '" + line + "'");
        prop.type = *t;
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      parse_error(line_no, "unknown keyword '" + keyword + "'");
    }
  }
  if (!have_format) parse_error(line_no, "missing format line");
  return header;
}

inline double read_binary_scalar(std::istream& in, Scalar type) {
  std::array<char, 8> buf{};
  const std::size_t size = scalar_size(type);
  if (!in.read(buf.data(), static_cast<std::streamsize>(size)))
    fail(ErrorKind::parse, "PLY body truncated");
  auto as = [&]<typename T>(T) {
    T value;
    std::memcpy(&value, buf.data(), sizeof(T));
    return static_cast<double>(value);
  };
  switch (type) {
    case Scalar::i8: return as(std::int8_t{});
    case Scalar::u8: return as(std::uint8_t{});
    case Scalar::i16: return as(std::int16_t{});
    case Scalar::u16: return as(std::uint16_t{});
    case Scalar::i32: return as(std::int32_t{});
    case Scalar::u32: return as(std::uint32_t{});
    case Scalar::f32: return as(float{});
    case Scalar::f64: return as(double{});
  }
  return 0.0;
}

inline std::uint8_t to_channel(double v) {
  if (!(v >= 0.0 && v <= 255.0)) fail(ErrorKind::parse, "color channel out of range [0,255]");
  return static_cast<std::uint8_t>(v);
}

}  // namespace ply_detail

/// Whether a vertex element without red/green/blue is an error or yields a
/// positions-only cloud (decoder input).
enum class ColorPolicy { required, optional };

inline PointCloud read_ply(std::istream& in, ColorPolicy colors = ColorPolicy::required) {
  using namespace ply_detail;
  const Header header = read_header(in);

  const Element* vertex = nullptr;
  for (const Element& e : header.elements) {
    if (e.name == "vertex") vertex = &e;
  }
  if (vertex == nullptr) fail(ErrorKind::parse, "PLY has no vertex element");

  std::array<int, 6> slot{-1, -1, -1, -1, -1, -1};
  const std::array<const char*, 6> wanted{"x", "y", "z", "red", "green", "blue"};
  for (std::size_t p = 0; p < vertex->properties.size(); ++p) {
    for (std::size_t w = 0; w < wanted.size(); ++w) {
      if (vertex->properties[p].name == wanted[w] && !vertex->properties[p].is_list)
        slot[w] = static_cast<int>(p);
    }
  }
  if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) fail(ErrorKind::parse, "PLY vertex lacks x/y/z");
  const bool have_colors = slot[3] >= 0 && slot[4] >= 0 && slot[5] >= 0;
  if (!have_colors && colors == ColorPolicy::required) fail(ErrorKind::parse, "no attributes");

  PointCloud pc;
  std::vector<double> values;
  for (const Element& element : header.elements) {
    const bool is_vertex = &element == vertex;
    if (is_vertex) {
      pc.positions.reserve(element.count);
      if (have_colors) pc.colors.reserve(element.count);
    }
    for (std::size_t row = 0; row < element.count; ++row) {
      values.assign(element.properties.size(), 0.0);
      if (header.format == PlyFormat::ascii) {
        std::string line;
        do {
          if (!std::getline(in, line)) fail(ErrorKind::parse, "PLY body truncated in element '" + element.name + "'");
        } while (line.find_first_not_of(" \t\r") == std::string::npos);
        std::istringstream tokens(line);
        for (std::size_t p = 0; p < element.properties.size(); ++p) {
          const Property& prop = element.properties[p];
          double v = 0.0;
          bool ok = false;
          if (!prop.is_list && prop.type == Scalar::f32) {
            float f = 0.0f;
            ok = static_cast<bool>(tokens >> f);
            v = f;
          } else {
            ok = static_cast<bool>(tokens >> v);
          }
          if (!ok) fail(ErrorKind::parse, "malformed PLY row " + std::to_string(row) + " in element '" + element.name + "'");
          if (prop.is_list) {
            for (long long k = 0; k < static_cast<long long>(v); ++k) {
              double ignored = 0.0;
              if (!(tokens >> ignored)) fail(ErrorKind::parse, "short PLY list in element '" + element.name + "'");
            }
          }
          values[p] = v;
        }
      } else {
        for (std::size_t p = 0; p < element.properties.size(); ++p) {
          const Property& prop = element.properties[p];
          if (prop.is_list) {
            const auto count = static_cast<std::size_t>(read_binary_scalar(in, prop.count_type));
            for (std::size_t k = 0; k < count; ++k) read_binary_scalar(in, prop.type);
          } else {
            values[p] = read_binary_scalar(in, prop.type);
          }
        }
      }
      if (is_vertex) {
        pc.positions.push_back({values[slot[0]], values[slot[1]], values[slot[2]]});
        if (have_colors) pc.colors.push_back({to_channel(values[slot[3]]), to_channel(values[slot[4]]), to_channel(values[slot[5]])});
      }
    }
    if (is_vertex) break;
  }
  validate(pc);
  return pc;
}

inline PointCloud load_ply(const std::filesystem::path& path, ColorPolicy colors = ColorPolicy::required) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return read_ply(in, colors);
}

inline void write_ply(std::ostream& out, const PointCloud& pc, PlyFormat format = PlyFormat::binary_little_endian) {
  validate(pc);
  require(pc.has_colors(), "PLY output needs one colour per point");
  out << "ply\n"
      << (format == PlyFormat::ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << pc.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  if (format == PlyFormat::ascii) {
    out << std::setprecision(std::numeric_limits<float>::max_digits10);
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const Vec3& p = pc.positions[i];
      const Rgb& c = pc.colors[i];
      out << static_cast<float>(p.x) << ' ' << static_cast<float>(p.y) << ' ' << static_cast<float>(p.z) << ' '
          << int{c.r} << ' ' << int{c.g} << ' ' << int{c.b} << '\n';
    }
  } else {
    std::array<char, 15> record{};
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const std::array<float, 3> xyz{static_cast<float>(pc.positions[i].x), static_cast<float>(pc.positions[i].y),
                                     static_cast<float>(pc.positions[i].z)};
      std::memcpy(record.data(), xyz.data(), 12);
      record[12] = static_cast<char>(pc.colors[i].r);
      record[13] = static_cast<char>(pc.colors[i].g);
      record[14] = static_cast<char>(pc.colors[i].b);
      out.write(record.data(), record.size());
    }
  }
  if (!out) fail(ErrorKind::io, "failed writing PLY stream");
}

inline void save_ply(const PointCloud& pc, const std::filesystem::path& path,
                     PlyFormat format = PlyFormat::binary_little_endian) {
  validate(pc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  write_ply(out, pc, format);
  out.close();
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace foldpc
