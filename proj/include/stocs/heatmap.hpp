#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stocs/binary_io.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

/// Per-class detector activations on a coarse grid. Each grid is row-major
/// with `width * height` cells; cell (i, j) covers image pixels around
/// (scale_factor * i + scale_factor / 2, scale_factor * j + scale_factor / 2).
struct RawHeatmap {
  int width = 0;
  int height = 0;
  int scale_factor = 32;
  std::vector<std::string> class_ids;
  std::vector<std::vector<double>> grids;

  std::size_t class_index(const std::string& id) const {
    const auto it = std::find(class_ids.begin(), class_ids.end(), id);
    if (it == class_ids.end()) throw Error(ErrorCode::UnknownClass, "no heatmap for class '" + id + "'");
    return static_cast<std::size_t>(it - class_ids.begin());
  }

  double at(std::size_t cls, int i, int j) const {
    return grids[cls][static_cast<std::size_t>(j) * width + i];
  }

  void validate() const {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::DimensionMismatch, "empty heatmap grid");
    if (class_ids.size() != grids.size()) throw Error(ErrorCode::DimensionMismatch, "class/grid count mismatch");
    for (const auto& g : grids) {
      if (g.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::DimensionMismatch, "grid size does not match width*height");
      }
      for (double v : g) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "heatmap contains non-finite values");
      }
    }
  }

  friend bool operator==(const RawHeatmap&, const RawHeatmap&) = default;
};

/// Min-max normalized heatmap, values in [0, 1].
struct ProbabilityHeatmap : RawHeatmap {
  /// Classes whose raw map was constant (normalized to all zeros).
  std::vector<std::string> constant_classes;
};

/// Per-class min-max normalization. A constant class map carries no
/// localization evidence and becomes all zeros; it is listed in
/// `constant_classes` so callers can warn.
inline ProbabilityHeatmap normalize_heatmap(const RawHeatmap& raw) {
  raw.validate();
  ProbabilityHeatmap out;
  static_cast<RawHeatmap&>(out) = raw;
  for (std::size_t c = 0; c < out.grids.size(); ++c) {
    auto& g = out.grids[c];
    const auto [lo_it, hi_it] = std::minmax_element(g.begin(), g.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
      std::fill(g.begin(), g.end(), 0.0);
      out.constant_classes.push_back(out.class_ids[c]);
      continue;
    }
    const double range = hi - lo;
    for (auto& v : g) v = std::clamp((v - lo) / range, 0.0, 1.0);
  }
  return out;
}

namespace detail {

/// Bilinear sample at fractional grid coordinates, clamped to the border.
inline double sample_bilinear(const std::vector<double>& grid, int width, int height, double gx, double gy) {
  gx = std::clamp(gx, 0.0, static_cast<double>(width - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = gx - x0, fy = gy - y0;
  const auto at = [&](int x, int y) { return grid[static_cast<std::size_t>(y) * width + x]; };
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace detail

/// Resamples every map onto the finest grid (bilinear, aligned by grid
/// extent) and averages them per class. All maps must declare the same
/// classes in the same order.
inline RawHeatmap combine_multiscale(const std::vector<RawHeatmap>& maps) {
  if (maps.empty()) throw Error(ErrorCode::InvalidArgument, "no heatmaps to combine");
  for (const auto& m : maps) {
    m.validate();
    if (m.class_ids != maps.front().class_ids) {
      throw Error(ErrorCode::ClassSetMismatch, "heatmaps declare different class sets");
    }
  }
  const auto finest = std::max_element(maps.begin(), maps.end(), [](const auto& a, const auto& b) {
    return static_cast<long>(a.width) * a.height < static_cast<long>(b.width) * b.height;
  });
  RawHeatmap out;
  out.width = finest->width;
  out.height = finest->height;
  out.scale_factor = finest->scale_factor;
  out.class_ids = finest->class_ids;
  out.grids.assign(out.class_ids.size(), std::vector<double>(static_cast<std::size_t>(out.width) * out.height, 0.0));

  for (const auto& m : maps) {
    const double sx = static_cast<double>(m.width) / out.width;
    const double sy = static_cast<double>(m.height) / out.height;
    for (std::size_t c = 0; c < out.grids.size(); ++c) {
      for (int j = 0; j < out.height; ++j) {
        for (int i = 0; i < out.width; ++i) {
          const double v = (m.width == out.width && m.height == out.height)
                               ? m.at(c, i, j)
                               : detail::sample_bilinear(m.grids[c], m.width, m.height, (i + 0.5) * sx - 0.5,
                                                         (j + 0.5) * sy - 0.5);
          out.grids[c][static_cast<std::size_t>(j) * out.width + i] += v;
        }
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (auto& g : out.grids)
    for (auto& v : g) v *= inv;
  return out;
}

/// Bilinearly interpolated class probability at image coordinates (u, v).
inline double pixel_probability(const ProbabilityHeatmap& h, std::size_t class_index, double u, double v) {
  const double s = h.scale_factor;
  if (!(u >= 0.0 && v >= 0.0 && u < h.width * s && v < h.height * s)) {
    throw Error(ErrorCode::InvalidArgument, "pixel outside the heatmap's image extent");
  }
  const double p = detail::sample_bilinear(h.grids[class_index], h.width, h.height, (u - s / 2.0) / s,
                                           (v - s / 2.0) / s);
  return std::clamp(p, 0.0, 1.0);
}

inline double pixel_probability(const ProbabilityHeatmap& h, const std::string& class_id, double u, double v) {
  return pixel_probability(h, h.class_index(class_id), u, v);
}

/// Probability of each point's source pixel. Pixels beyond the grid extent
/// (image sizes that are not a multiple of the scale factor) clamp to the
/// border cells.
inline std::vector<double> annotate_cloud(const PointCloud& cloud, const ProbabilityHeatmap& h,
                                          const std::string& class_id) {
  const std::size_t c = h.class_index(class_id);
  if (!cloud.has_pixels()) throw Error(ErrorCode::InvalidArgument, "cloud has no source pixels");
  std::vector<double> probs(cloud.size());
  const double s = h.scale_factor;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto px = cloud.pixels[i];
    probs[i] = std::clamp(
        detail::sample_bilinear(h.grids[c], h.width, h.height, (px.u - s / 2.0) / s, (px.v - s / 2.0) / s), 0.0,
        1.0);
  }
  return probs;
}

/// Grid size covering an image at the given scale factor.
inline std::pair<int, int> heatmap_grid_size(int image_width, int image_height, int scale_factor = 32) {
  return {(image_width + scale_factor - 1) / scale_factor, (image_height + scale_factor - 1) / scale_factor};
}

// FHM1: magic, u32 width, u32 height, u32 class count, then per class a u32
// id length, the UTF-8 id and a row-major f32 grid.

inline std::vector<char> serialize_heatmap(const RawHeatmap& h) {
  h.validate();
  detail::ByteWriter w;
  w.bytes("FHM1");
  w.u32(static_cast<std::uint32_t>(h.width));
  w.u32(static_cast<std::uint32_t>(h.height));
  w.u32(static_cast<std::uint32_t>(h.class_ids.size()));
  for (std::size_t c = 0; c < h.class_ids.size(); ++c) {
    w.u32(static_cast<std::uint32_t>(h.class_ids[c].size()));
    w.bytes(h.class_ids[c]);
    for (double v : h.grids[c]) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline RawHeatmap deserialize_heatmap(std::vector<char> data) {
  detail::ByteReader r(std::move(data), ErrorCode::FormatVersionMismatch);
  if (r.remaining() < 4 || r.bytes(4) != "FHM1") throw Error(ErrorCode::FormatVersionMismatch, "not an FHM1 heatmap");
  RawHeatmap h;
  h.width = static_cast<int>(r.u32());
  h.height = static_cast<int>(r.u32());
  const auto classes = r.u32();
  const std::uint64_t cells = static_cast<std::uint64_t>(h.width) * static_cast<std::uint64_t>(h.height);
  if (h.width <= 0 || h.height <= 0 || cells > (1ULL << 28)) {
    throw Error(ErrorCode::FormatVersionMismatch, "implausible heatmap dimensions");
  }
  for (std::uint32_t c = 0; c < classes; ++c) {
    h.class_ids.push_back(r.bytes(r.u32()));
    if (cells * 4 > r.remaining()) throw Error(ErrorCode::FormatVersionMismatch, "heatmap grid truncated");
    std::vector<double> g(cells);
    for (auto& v : g) v = r.f32();
    h.grids.push_back(std::move(g));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::FormatVersionMismatch, "trailing bytes in heatmap");
  h.validate();
  return h;
}

inline void save_heatmap(const RawHeatmap& h, const std::filesystem::path& path) {
  detail::write_file(path, serialize_heatmap(h));
}

inline RawHeatmap load_heatmap(const std::filesystem::path& path) {
  return deserialize_heatmap(detail::read_file(path));
}

/// Loads one class grid from a CSV file (one grid row per line). The class id
/// defaults to the file stem.
inline RawHeatmap load_heatmap_csv(const std::filesystem::path& path, std::string class_id = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  RawHeatmap h;
  std::vector<double> grid;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ls(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        grid.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::IoError, "bad CSV value '" + cell + "' in " + path.string());
      }
      ++cols;
    }
    if (h.width == 0) h.width = cols;
    if (cols != h.width) throw Error(ErrorCode::DimensionMismatch, "ragged CSV rows in " + path.string());
    ++h.height;
  }
  h.class_ids.push_back(class_id.empty() ? path.stem().string() : std::move(class_id));
  h.grids.push_back(std::move(grid));
  h.validate();
  return h;
}

}  // namespace stocs
