#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

/// Oriented point-pair feature (|d|, angle(n1,d), angle(n2,d), angle(n1,n2)),
/// d = p2 - p1. Angles in [0, pi].
struct PointPairFeature {
  double distance = 0.0;
  double angle_n1_d = 0.0;
  double angle_n2_d = 0.0;
  double angle_n1_n2 = 0.0;
};

/// Unsigned angle between two vectors, robust near 0 and pi.
inline double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline PointPairFeature compute_ppf(const Point3& p1, const UnitVector3& n1, const Point3& p2,
                                    const UnitVector3& n2) {
  const Eigen::Vector3d d = p2 - p1;
  const double dist = d.norm();
  if (!(dist > 0.0)) throw Error(ErrorCode::CoincidentPoints, "point pair is coincident");
  return {dist, angle_between(n1, d), angle_between(n2, d), angle_between(n1, n2)};
}

using QuantizedPPFKey = std::array<std::uint32_t, 4>;

struct QuantizedPPFKeyHash {
  std::size_t operator()(const QuantizedPPFKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : k) {
      h ^= v;
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Bin layout of the feature space: floor(distance / distance_step) and
/// floor(angle / angle_step), the last angle bin absorbing angle == pi.
struct PPFQuantization {
  double distance_step = 0.01;
  double angle_step = 12.0 * std::numbers::pi / 180.0;

  std::uint32_t angle_bins() const {
    return static_cast<std::uint32_t>(std::ceil(std::numbers::pi / angle_step - 1e-9));
  }

  QuantizedPPFKey quantize(const PointPairFeature& f) const {
    const auto abin = [&](double a) {
      const auto b = static_cast<std::uint32_t>(std::max(0.0, std::floor(a / angle_step)));
      return std::min(b, angle_bins() - 1);
    };
    const double dbin = std::floor(f.distance / distance_step);
    const auto d = dbin >= 4294967295.0 ? 4294967295U : static_cast<std::uint32_t>(std::max(0.0, dbin));
    return {d, abin(f.angle_n1_d), abin(f.angle_n2_d), abin(f.angle_n1_n2)};
  }

  friend bool operator==(const PPFQuantization&, const PPFQuantization&) = default;
};

/// Multiset of quantized features observed over ordered model point pairs.
struct PPFTable {
  PPFQuantization quantization;
  std::unordered_map<QuantizedPPFKey, std::uint64_t, QuantizedPPFKeyHash> counts;

  void insert(const QuantizedPPFKey& key) { ++counts[key]; }

  std::uint64_t count(const QuantizedPPFKey& key) const {
    const auto it = counts.find(key);
    return it == counts.end() ? 0 : it->second;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [k, c] : counts) t += c;
    return t;
  }

  std::uint64_t max_count() const {
    std::uint64_t m = 0;
    for (const auto& [k, c] : counts) m = std::max(m, c);
    return m;
  }

  friend bool operator==(const PPFTable&, const PPFTable&) = default;
};

}  // namespace stocs
