#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/model.hpp"
#include "stocs/rng.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

/// Four scene points seeding one pose hypothesis, with the node potentials
/// and pairwise edge potentials they were drawn under. Edge order follows
/// (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
struct Base {
  std::array<std::size_t, 4> indices{};
  std::array<double, 4> node{};
  std::array<double, 6> edge{};
};

inline constexpr std::array<std::pair<int, int>, 6> kBasePairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

/// Draws bases sequentially: b1 with weight phi_node(b1), then each b_i with
/// weight phi_node(b_i) * prod_{j<i} phi_edge(b_i, b_j), restricted to points
/// whose distance to every earlier pick lies in [min_spread, max_spread].
/// The normalizer of the joint distribution is never formed.
class BaseSampler {
 public:
  /// `node` holds one non-negative potential per scene point; `candidates`
  /// lists the scene indices allowed in bases (all points when empty).
  BaseSampler(const PointCloud& scene, std::span<const double> node, const ObjectModel& model, double min_spread,
              double max_spread, EdgePotentialOptions edge = {}, std::span<const std::size_t> candidates = {})
      : scene_(scene), node_(node.begin(), node.end()), model_(model), min_spread_(min_spread),
        max_spread_(max_spread), edge_(edge), max_count_(model.ppf.max_count()) {
    if (node_.size() != scene.size()) throw Error(ErrorCode::DimensionMismatch, "one potential per scene point");
    if (!scene.has_normals()) throw Error(ErrorCode::InvalidArgument, "scene needs normals");
    if (!(min_spread_ < max_spread_)) throw Error(ErrorCode::InvalidArgument, "min spread must be below max spread");
    if (candidates.empty()) {
      for (std::size_t i = 0; i < scene.size(); ++i)
        if (node_[i] > 0.0) support_.push_back(i);
    } else {
      for (auto i : candidates)
        if (node_[i] > 0.0) support_.push_back(i);
    }
    if (support_.size() < 4) {
      throw Error(ErrorCode::InsufficientSupport, "fewer than four points with positive probability");
    }
    std::vector<Point3> pts;
    pts.reserve(support_.size());
    for (auto i : support_) pts.push_back(scene.points[i]);
    support_index_.emplace(pts);
    cumulative_.reserve(support_.size());
    double acc = 0.0;
    for (auto i : support_) {
      acc += node_[i];
      cumulative_.push_back(acc);
    }
  }

  std::size_t support_size() const { return support_.size(); }
  std::span<const std::size_t> support() const { return support_; }

  double edge(std::size_t a, std::size_t b) const {
    return edge_potential(model_, scene_.points[a], scene_.normals[a], scene_.points[b], scene_.normals[b], edge_,
                          max_count_);
  }

  /// One sequential draw; nullopt when the first pick has no valid
  /// completion under the spread constraint.
  std::optional<Base> sample(Rng& rng) const {
    Base base;
    const std::size_t first = draw(cumulative_, rng);
    base.indices[0] = support_[first];
    base.node[0] = node_[base.indices[0]];

    // Local candidates: support points within max_spread of b1.
    const Point3& p0 = scene_.points[base.indices[0]];
    const auto local = support_index_->radius_search(p0, max_spread_);
    std::vector<std::size_t> cand;
    std::vector<double> weight;
    cand.reserve(local.size());
    weight.reserve(local.size());
    for (auto li : local) {
      const std::size_t s = support_[li];
      if (s == base.indices[0]) continue;
      cand.push_back(s);
      weight.push_back(node_[s]);
    }

    std::vector<double> cumulative(cand.size());
    for (int step = 1; step < 4; ++step) {
      const std::size_t prev = base.indices[step - 1];
      const Point3& pp = scene_.points[prev];
      double acc = 0.0;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        double& w = weight[c];
        if (w > 0.0) {
          const double d = (scene_.points[cand[c]] - pp).norm();
          if (cand[c] == prev || d < min_spread_ || d > max_spread_) {
            w = 0.0;
          } else {
            w *= edge(cand[c], prev);
          }
        }
        acc += w;
        cumulative[c] = acc;
      }
      if (!(acc > 0.0)) return std::nullopt;
      const std::size_t pick = draw(cumulative, rng);
      base.indices[step] = cand[pick];
      base.node[step] = node_[cand[pick]];
      weight[pick] = 0.0;
    }
    for (std::size_t e = 0; e < kBasePairs.size(); ++e) {
      base.edge[e] = edge(base.indices[kBasePairs[e].second], base.indices[kBasePairs[e].first]);
    }
    return base;
  }

 private:
  static std::size_t draw(const std::vector<double>& cumulative, Rng& rng) {
    const double total = cumulative.back();
    const double target = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    if (it == cumulative.end()) {
      // target rounded up to the total: last entry with positive weight
      i = cumulative.size() - 1;
      while (i > 0 && cumulative[i] == cumulative[i - 1]) --i;
    }
    return i;
  }

  const PointCloud& scene_;
  std::vector<double> node_;
  const ObjectModel& model_;
  double min_spread_;
  double max_spread_;
  EdgePotentialOptions edge_;
  std::uint64_t max_count_;
  std::vector<std::size_t> support_;
  std::optional<SpatialIndex> support_index_;
  std::vector<double> cumulative_;
};

/// Draws a base, throwing InsufficientSupport on a dead end.
inline Base sample_base(const BaseSampler& sampler, Rng& rng) {
  if (auto b = sampler.sample(rng)) return *b;
  throw Error(ErrorCode::InsufficientSupport, "spread constraint has no valid completion");
}

}  // namespace stocs
