#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stocs/binary_io.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;        // scalar type, or element type for lists
  std::string count_type;  // non-empty for list properties
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw Error(ErrorCode::IoError, "unknown PLY type " + t);
}

inline double ply_read_binary(ByteReader& r, const std::string& t) {
  if (t == "char" || t == "int8") return r.scalar<std::int8_t>();
  if (t == "uchar" || t == "uint8") return r.scalar<std::uint8_t>();
  if (t == "short" || t == "int16") return r.scalar<std::int16_t>();
  if (t == "ushort" || t == "uint16") return r.scalar<std::uint16_t>();
  if (t == "int" || t == "int32") return r.scalar<std::int32_t>();
  if (t == "uint" || t == "uint32") return r.scalar<std::uint32_t>();
  if (t == "float" || t == "float32") return r.scalar<float>();
  if (t == "double" || t == "float64") return r.scalar<double>();
  throw Error(ErrorCode::IoError, "unknown PLY type " + t);
}

}  // namespace detail

/// Reads vertex positions (required) and nx/ny/nz (optional) from an ASCII or
/// binary little-endian PLY file. Other elements are skipped. `unit_scale`
/// converts file units to meters (0.001 for millimeter models).
inline PointCloud read_ply(const std::filesystem::path& path, double unit_scale = 1.0) {
  auto raw = detail::read_file(path);
  const std::string text(raw.begin(), raw.end());
  const auto header_end = text.find("end_header");
  if (text.rfind("ply", 0) != 0 || header_end == std::string::npos) {
    throw Error(ErrorCode::IoError, path.string() + " is not a PLY file");
  }
  std::size_t body = text.find('\n', header_end);
  if (body == std::string::npos) throw Error(ErrorCode::IoError, "PLY header not terminated");
  ++body;

  std::istringstream header(text.substr(0, header_end));
  std::string line, format;
  std::vector<detail::PlyElement> elements;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      ls >> format;
    } else if (word == "element") {
      detail::PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw Error(ErrorCode::IoError, "PLY property before element");
      detail::PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = type;
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    }
  }
  if (format != "ascii" && format != "binary_little_endian") {
    throw Error(ErrorCode::IoError, "unsupported PLY format '" + format + "'");
  }

  PointCloud cloud;
  bool have_normals = false;
  const bool ascii = format == "ascii";
  std::istringstream ascii_body(ascii ? text.substr(body) : std::string());
  detail::ByteReader bin(ascii ? std::vector<char>() : std::vector<char>(raw.begin() + body, raw.end()),
                         ErrorCode::IoError);

  auto next_value = [&](const std::string& type) -> double {
    if (!ascii) return detail::ply_read_binary(bin, type);
    double v;
    if (!(ascii_body >> v)) throw Error(ErrorCode::IoError, "PLY body truncated");
    return v;
  };

  for (const auto& e : elements) {
    const bool vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
    for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
      const auto& n = e.properties[i].name;
      if (n == "x") ix = i;
      if (n == "y") iy = i;
      if (n == "z") iz = i;
      if (n == "nx") inx = i;
      if (n == "ny") iny = i;
      if (n == "nz") inz = i;
    }
    if (vertex && (ix < 0 || iy < 0 || iz < 0)) throw Error(ErrorCode::IoError, "PLY vertex lacks x/y/z");
    if (vertex) have_normals = inx >= 0 && iny >= 0 && inz >= 0;
    std::vector<double> values(e.properties.size());
    for (std::size_t row = 0; row < e.count; ++row) {
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        const auto& p = e.properties[i];
        if (p.count_type.empty()) {
          values[i] = next_value(p.type);
        } else {
          const auto n = static_cast<std::size_t>(next_value(p.count_type));
          for (std::size_t j = 0; j < n; ++j) next_value(p.type);
        }
      }
      if (vertex) {
        cloud.points.emplace_back(values[ix] * unit_scale, values[iy] * unit_scale, values[iz] * unit_scale);
        if (have_normals) {
          Eigen::Vector3d n(values[inx], values[iny], values[inz]);
          cloud.normals.push_back(n.norm() > 0.0 ? Eigen::Vector3d(n.normalized()) : Eigen::Vector3d::UnitZ());
        }
      }
    }
  }
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, path.string() + " has no vertices");
  return cloud;
}

/// Writes an ASCII PLY with positions and, when present, normals.
inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ostringstream out;
  out.precision(9);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (cloud.has_normals()) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.has_normals()) {
      const auto& n = cloud.normals[i];
      out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    out << '\n';
  }
  detail::write_text_file(path, out.str());
}

}  // namespace stocs
