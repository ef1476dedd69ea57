#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "stocs/binary_io.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/normals.hpp"
#include "stocs/ppf.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

namespace detail {

struct CellKey {
  std::int64_t x, y, z;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Greedy minimum-distance thinning in input order: a point is kept unless a
/// previously kept point lies closer than `voxel`. Kept points are therefore
/// at least `voxel` apart, and every dropped point is within `voxel` of a kept
/// one. Returns the kept indices in ascending order.
inline std::vector<std::size_t> subsample_indices(std::span<const Point3> points, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel must be positive");
  if (points.empty()) throw Error(ErrorCode::EmptyCloud, "cannot subsample an empty cloud");
  // Relative slack so points exactly one voxel apart on a grid are kept.
  const double reject2 = voxel * voxel * (1.0 - 1e-9);
  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellKeyHash> grid;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3& p = points[i];
    const detail::CellKey c{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                            static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                            static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    bool blocked = false;
    for (int dx = -1; dx <= 1 && !blocked; ++dx)
      for (int dy = -1; dy <= 1 && !blocked; ++dy)
        for (int dz = -1; dz <= 1 && !blocked; ++dz) {
          const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (auto j : it->second) {
            if ((points[j] - p).squaredNorm() < reject2) {
              blocked = true;
              break;
            }
          }
        }
    if (!blocked) {
      grid[c].push_back(i);
      kept.push_back(i);
    }
  }
  return kept;
}

inline PointCloud subsample(const PointCloud& cloud, double voxel) {
  const auto kept = subsample_indices(cloud.points, voxel);
  return cloud.select(kept);
}

/// Largest pairwise distance, exhaustive.
inline double max_pairwise_distance(std::span<const Point3> points) {
  double best2 = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      best2 = std::max(best2, (points[i] - points[j]).squaredNorm());
  return std::sqrt(best2);
}

/// How the pair-feature table turns into the edge potential.
enum class EdgeWeighting {
  BinaryWithFloor,  ///< 1 if the key was observed on the model, else the floor
  CountWeighted,    ///< count / max_count, floored
};

struct ObjectModel {
  std::string id;
  PointCloud cloud;  ///< subsampled, with unit normals
  PPFTable ppf;
  double diameter = 0.0;

  friend bool operator==(const ObjectModel& a, const ObjectModel& b) {
    return a.id == b.id && a.cloud.points == b.cloud.points && a.cloud.normals == b.cloud.normals &&
           a.ppf == b.ppf && a.diameter == b.diameter;
  }
};

/// Median nearest-neighbor spacing of the model cloud.
inline double model_resolution(const ObjectModel& model) {
  const auto& pts = model.cloud.points;
  if (pts.size() < 2) return model.diameter > 0.0 ? model.diameter : 0.0;
  const SpatialIndex index(pts);
  std::vector<double> spacing;
  spacing.reserve(pts.size());
  for (const auto& p : pts) spacing.push_back(index.knn(p, 2).back().distance());
  std::nth_element(spacing.begin(), spacing.begin() + spacing.size() / 2, spacing.end());
  return spacing[spacing.size() / 2];
}

/// Default quantization: 2% of the diameter, 12 degrees.
inline PPFQuantization default_quantization(double diameter) {
  return {0.02 * diameter, 12.0 * std::numbers::pi / 180.0};
}

/// Subsamples `cloud`, estimates outward normals when missing, and tabulates
/// the quantized feature of every ordered pair of distinct points. A
/// non-positive `dist_step` means 2% of the diameter. Coordinates are rounded
/// to single precision so that the persisted model reloads bit-exactly.
inline ObjectModel build_model(const PointCloud& cloud, double voxel, double dist_step,
                               double angle_step, std::string id) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "model cloud is empty");
  if (!(angle_step > 0.0)) throw Error(ErrorCode::InvalidArgument, "angle step must be positive");

  PointCloud sampled = subsample(cloud, voxel);
  if (!sampled.has_normals()) {
    if (sampled.size() >= 4) {
      const std::size_t k = std::min<std::size_t>(10, sampled.size() - 1);
      // Facing the centroid, then flipped: outward for star-shaped models.
      const Point3 c = centroid(sampled.points);
      sampled = estimate_normals(sampled, k, c);
      for (auto& n : sampled.normals) n = -n;
    } else {
      sampled.normals.assign(sampled.size(), UnitVector3::UnitZ());
    }
  }
  sampled.pixels.clear();

  ObjectModel model;
  model.id = std::move(id);
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const Eigen::Vector3f p = sampled.points[i].cast<float>();
    const Eigen::Vector3f n = sampled.normals[i].normalized().cast<float>();
    model.cloud.points.push_back(p.cast<double>());
    model.cloud.normals.push_back(n.cast<double>());
  }
  model.diameter = max_pairwise_distance(model.cloud.points);
  if (!(model.diameter > 0.0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "model needs at least two distinct points");
  }

  model.ppf.quantization = dist_step > 0.0 ? PPFQuantization{dist_step, angle_step}
                                           : PPFQuantization{0.02 * model.diameter, angle_step};
  const auto& pts = model.cloud.points;
  const auto& nrm = model.cloud.normals;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      model.ppf.insert(model.ppf.quantization.quantize(compute_ppf(pts[i], nrm[i], pts[j], nrm[j])));
    }
  return model;
}

struct EdgePotentialOptions {
  EdgeWeighting weighting = EdgeWeighting::BinaryWithFloor;
  double floor = 0.01;
};

/// Plausibility that the oriented pair (p1,n1)-(p2,n2) lies on the model.
inline double edge_potential(const ObjectModel& model, const Point3& p1, const UnitVector3& n1,
                             const Point3& p2, const UnitVector3& n2,
                             const EdgePotentialOptions& opts = {}, std::uint64_t max_count = 0) {
  const Eigen::Vector3d d = p2 - p1;
  if (!(d.squaredNorm() > 0.0)) return opts.floor;
  const auto key = model.ppf.quantization.quantize(compute_ppf(p1, n1, p2, n2));
  const std::uint64_t c = model.ppf.count(key);
  if (c == 0) return opts.floor;
  if (opts.weighting == EdgeWeighting::BinaryWithFloor) return 1.0;
  const std::uint64_t m = max_count > 0 ? max_count : model.ppf.max_count();
  return std::max(opts.floor, static_cast<double>(c) / static_cast<double>(m));
}

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// SPM1 container: magic, u32 version, id, f64 diameter, points and normals
/// as f32, f64 quantization steps, then the table sorted by key.
inline std::vector<char> serialize_model(const ObjectModel& model) {
  detail::ByteWriter w;
  w.bytes("SPM1");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.id.size()));
  w.bytes(model.id);
  w.f64(model.diameter);
  w.u32(static_cast<std::uint32_t>(model.cloud.size()));
  for (std::size_t i = 0; i < model.cloud.size(); ++i) {
    const auto& p = model.cloud.points[i];
    const UnitVector3 n = model.cloud.has_normals() ? model.cloud.normals[i] : UnitVector3::UnitZ();
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(p(a)));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(n(a)));
  }
  w.f64(model.ppf.quantization.distance_step);
  w.f64(model.ppf.quantization.angle_step);
  std::vector<std::pair<QuantizedPPFKey, std::uint64_t>> entries(model.ppf.counts.begin(),
                                                                 model.ppf.counts.end());
  std::sort(entries.begin(), entries.end());
  w.u64(entries.size());
  for (const auto& [key, count] : entries) {
    for (auto k : key) w.u32(k);
    w.u64(count);
  }
  return w.buffer();
}

inline ObjectModel deserialize_model(std::vector<char> data) {
  detail::ByteReader r(std::move(data), ErrorCode::FormatVersionMismatch);
  if (r.remaining() < 4 || r.bytes(4) != "SPM1") {
    throw Error(ErrorCode::FormatVersionMismatch, "not an SPM1 model file");
  }
  if (const auto version = r.u32(); version != kModelFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch, "unsupported model version " + std::to_string(version));
  }
  ObjectModel m;
  const auto id_len = r.u32();
  m.id = r.bytes(id_len);
  m.diameter = r.f64();
  const auto n = r.u32();
  if (static_cast<std::uint64_t>(n) * 24 > r.remaining()) {
    throw Error(ErrorCode::FormatVersionMismatch, "point block truncated");
  }
  m.cloud.points.reserve(n);
  m.cloud.normals.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Point3 p;
    UnitVector3 nn;
    for (int a = 0; a < 3; ++a) p(a) = r.f32();
    for (int a = 0; a < 3; ++a) nn(a) = r.f32();
    m.cloud.points.push_back(p);
    m.cloud.normals.push_back(nn);
  }
  m.ppf.quantization.distance_step = r.f64();
  m.ppf.quantization.angle_step = r.f64();
  const auto keys = r.u64();
  if (keys > r.remaining() / 24) throw Error(ErrorCode::FormatVersionMismatch, "table truncated");
  m.ppf.counts.reserve(keys);
  for (std::uint64_t i = 0; i < keys; ++i) {
    QuantizedPPFKey key;
    for (auto& k : key) k = r.u32();
    m.ppf.counts[key] = r.u64();
  }
  if (r.remaining() != 0) throw Error(ErrorCode::FormatVersionMismatch, "trailing bytes after table");
  if (!(m.diameter > 0.0) || !(m.ppf.quantization.distance_step > 0.0) ||
      !(m.ppf.quantization.angle_step > 0.0)) {
    throw Error(ErrorCode::FormatVersionMismatch, "invalid model header values");
  }
  return m;
}

inline void save_model(const ObjectModel& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_model(model));
}

inline ObjectModel load_model(const std::filesystem::path& path) {
  return deserialize_model(detail::read_file(path));
}

}  // namespace stocs
