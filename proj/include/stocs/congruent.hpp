#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "stocs/geometry.hpp"
#include "stocs/model.hpp"
#include "stocs/ppf.hpp"
#include "stocs/sampler.hpp"

namespace stocs {

/// Pair geometry of a model cloud: distance and the three feature angles of
/// every ordered pair, as a dense table and as a list sorted by distance.
/// O(n^2) memory; built once per estimation.
class ModelPairIndex {
 public:
  struct PairFeature {
    float distance = 0, a1 = 0, a2 = 0, a3 = 0;
  };
  struct Entry {
    PairFeature f;
    std::uint32_t first, second;
  };

  explicit ModelPairIndex(const ObjectModel& model) : n_(model.cloud.size()) {
    const auto& pts = model.cloud.points;
    const auto& nrm = model.cloud.normals;
    pairs_.resize(n_ * n_);
    sorted_.reserve(n_ * (n_ - 1));
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (i == j) continue;
        const auto f = compute_ppf(pts[i], nrm[i], pts[j], nrm[j]);
        const PairFeature pf{static_cast<float>(f.distance), static_cast<float>(f.angle_n1_d),
                             static_cast<float>(f.angle_n2_d), static_cast<float>(f.angle_n1_n2)};
        pairs_[i * n_ + j] = pf;
        sorted_.push_back({pf, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
      }
    }
    std::sort(sorted_.begin(), sorted_.end(), [](const Entry& a, const Entry& b) {
      if (a.f.distance != b.f.distance) return a.f.distance < b.f.distance;
      return a.first < b.first || (a.first == b.first && a.second < b.second);
    });
  }

  std::size_t size() const { return n_; }
  const PairFeature& pair(std::size_t i, std::size_t j) const { return pairs_[i * n_ + j]; }

  /// Ordered pairs with distance in [lo, hi], by ascending distance.
  std::span<const Entry> range(double lo, double hi) const {
    const auto b = std::lower_bound(sorted_.begin(), sorted_.end(), lo,
                                    [](const Entry& e, double v) { return e.f.distance < v; });
    const auto e = std::upper_bound(b, sorted_.end(), hi, [](double v, const Entry& x) { return v < x.f.distance; });
    return {sorted_.data() + (b - sorted_.begin()), static_cast<std::size_t>(e - b)};
  }

 private:
  std::size_t n_;
  std::vector<PairFeature> pairs_;
  std::vector<Entry> sorted_;
};

/// Model indices matched to base points 0..3, with the summed squared
/// deviation of the six pairwise distances.
struct CongruentSet {
  std::array<std::uint32_t, 4> model{};
  double residual = 0.0;
};

struct CongruenceTolerance {
  double distance = 0.005;                          ///< meters, per pairwise distance
  double angle = 24.0 * std::numbers::pi / 180.0;  ///< radians, per feature angle
  std::size_t max_sets = 16;                        ///< 0 keeps every set
  std::size_t enumeration_limit = 200000;           ///< raw quadruple budget per base
};

/// Features of the six base pairs in kBasePairs order.
inline std::array<PointPairFeature, 6> base_features(const PointCloud& scene, const Base& base) {
  std::array<PointPairFeature, 6> out;
  for (std::size_t e = 0; e < 6; ++e) {
    const auto a = base.indices[kBasePairs[e].first];
    const auto b = base.indices[kBasePairs[e].second];
    out[e] = compute_ppf(scene.points[a], scene.normals[a], scene.points[b], scene.normals[b]);
  }
  return out;
}

/// Model quadruples whose six pairwise distances are each within
/// tol.distance of the base's and whose feature angles are each within
/// tol.angle. When more than tol.max_sets are found, the ones with the
/// smallest distance residual are kept (ties by model indices).
inline std::vector<CongruentSet> find_congruent_sets(const std::array<PointPairFeature, 6>& base,
                                                     const ModelPairIndex& index, const CongruenceTolerance& tol) {
  const auto angles_ok = [&](const ModelPairIndex::PairFeature& m, const PointPairFeature& b) {
    return std::abs(m.a1 - b.angle_n1_d) <= tol.angle && std::abs(m.a2 - b.angle_n2_d) <= tol.angle &&
           std::abs(m.a3 - b.angle_n1_n2) <= tol.angle;
  };
  const auto dist_ok = [&](const ModelPairIndex::PairFeature& m, const PointPairFeature& b) {
    return std::abs(m.distance - b.distance) <= tol.distance;
  };
  const auto dev2 = [](const ModelPairIndex::PairFeature& m, const PointPairFeature& b) {
    const double d = m.distance - b.distance;
    return d * d;
  };

  // Model pairs matching base pairs (0,1), (0,2), (0,3), bucketed by their
  // first point so that each bucket lists the partners of one m0.
  const std::size_t n = index.size();
  struct Buckets {
    std::vector<std::uint32_t> offset, partner;
    std::span<const std::uint32_t> of(std::uint32_t m) const {
      return {partner.data() + offset[m], offset[m + 1] - offset[m]};
    }
  };
  std::array<Buckets, 3> partners;
  for (int k = 0; k < 3; ++k) {
    auto& bk = partners[k];
    bk.offset.assign(n + 1, 0);
    const auto window = index.range(base[k].distance - tol.distance, base[k].distance + tol.distance);
    std::vector<const ModelPairIndex::Entry*> hits;
    for (const auto& e : window)
      if (angles_ok(e.f, base[k])) {
        hits.push_back(&e);
        ++bk.offset[e.first + 1];
      }
    for (std::size_t m = 0; m < n; ++m) bk.offset[m + 1] += bk.offset[m];
    bk.partner.resize(hits.size());
    std::vector<std::uint32_t> fill(bk.offset.begin(), bk.offset.end() - 1);
    for (const auto* e : hits) bk.partner[fill[e->first]++] = e->second;
  }

  std::vector<CongruentSet> out;
  std::size_t visited = 0;
  for (std::uint32_t m0 = 0; m0 < n; ++m0) {
    const auto p1 = partners[0].of(m0), p2 = partners[1].of(m0), p3 = partners[2].of(m0);
    if (p1.empty() || p2.empty() || p3.empty()) continue;
    for (const std::uint32_t m1 : p1) {
      const auto& f01 = index.pair(m0, m1);
      for (const std::uint32_t m2 : p2) {
        if (m2 == m1) continue;
        const auto& f12 = index.pair(m1, m2);
        if (!dist_ok(f12, base[3]) || !angles_ok(f12, base[3])) continue;
        const auto& f02 = index.pair(m0, m2);
        for (const std::uint32_t m3 : p3) {
          if (m3 == m1 || m3 == m2) continue;
          if (++visited > tol.enumeration_limit) goto done;
          const auto& f13 = index.pair(m1, m3);
          if (!dist_ok(f13, base[4])) continue;
          const auto& f23 = index.pair(m2, m3);
          if (!dist_ok(f23, base[5]) || !angles_ok(f13, base[4]) || !angles_ok(f23, base[5])) continue;
          const auto& f03 = index.pair(m0, m3);
          const double residual = dev2(f01, base[0]) + dev2(f02, base[1]) + dev2(f03, base[2]) +
                                  dev2(f12, base[3]) + dev2(f13, base[4]) + dev2(f23, base[5]);
          out.push_back({{m0, m1, m2, m3}, residual});
        }
      }
    }
  }
done:
  if (tol.max_sets > 0 && out.size() > tol.max_sets) {
    const auto less = [](const CongruentSet& a, const CongruentSet& b) {
      return a.residual < b.residual || (a.residual == b.residual && a.model < b.model);
    };
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(tol.max_sets), out.end(), less);
    out.resize(tol.max_sets);
  }
  return out;
}

}  // namespace stocs
