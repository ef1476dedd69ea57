#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = std::numeric_limits<double>::infinity();

  double distance() const { return std::sqrt(squared_distance); }
};

/// Static kd-tree over a point set. Queries are exact; among equidistant
/// points the lowest original index wins, so answers coincide with a linear
/// scan that keeps the first minimum.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::span<const Point3> points, std::size_t leaf_size = 12)
      : leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    if (points.empty()) throw Error(ErrorCode::EmptyCloud, "cannot index an empty cloud");
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    coords_.assign(points.begin(), points.end());
    nodes_.reserve(2 * points.size() / leaf_size_ + 2);
    build(0, points.size());
    // Store points in leaf order for cache-friendly scans.
    std::vector<Point3> packed(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) packed[i] = coords_[order_[i]];
    coords_ = std::move(packed);
  }

  std::size_t size() const { return order_.size(); }

  Neighbor nearest(const Point3& q) const {
    Neighbor best;
    search_nearest(0, q, best);
    return best;
  }

  /// Nearest point strictly closer than `radius`, if any.
  std::optional<Neighbor> nearest_within(const Point3& q, double radius) const {
    Neighbor best;
    best.squared_distance = radius * radius;
    best.index = std::numeric_limits<std::size_t>::max();
    search_nearest_bounded(0, q, best);
    if (best.index == std::numeric_limits<std::size_t>::max()) return std::nullopt;
    return best;
  }

  /// The k nearest points ordered by (distance, index).
  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0) return heap;
    heap.reserve(k + 1);
    search_knn(0, q, k, heap);
    std::sort(heap.begin(), heap.end(), neighbor_less);
    return heap;
  }

  /// All points with distance <= radius, ordered by original index.
  std::vector<std::size_t> radius_search(const Point3& q, double radius) const {
    std::vector<std::size_t> out;
    search_radius(0, q, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  static bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
  }

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    Eigen::AlignedBox3d box;
    for (std::size_t i = begin; i < end; ++i) box.extend(coords_[order_[i]]);
    nodes_[id].box = box;
    nodes_[id].begin = static_cast<std::uint32_t>(begin);
    nodes_[id].end = static_cast<std::uint32_t>(end);
    if (end - begin <= leaf_size_) return id;

    int dim = 0;
    box.sizes().maxCoeff(&dim);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double ca = coords_[a](dim), cb = coords_[b](dim);
                       return ca < cb || (ca == cb && a < b);
                     });
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_distance2(const Eigen::AlignedBox3d& box, const Point3& q) {
    return box.squaredExteriorDistance(q);
  }

  void consider(std::size_t slot, const Point3& q, Neighbor& best) const {
    const double d2 = (coords_[slot] - q).squaredNorm();
    const std::size_t idx = order_[slot];
    if (d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index)) {
      best.squared_distance = d2;
      best.index = idx;
    }
  }

  void search_nearest(std::int32_t id, const Point3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) consider(i, q, best);
      return;
    }
    const double dl = box_distance2(nodes_[n.left].box, q);
    const double dr = box_distance2(nodes_[n.right].box, q);
    const auto first = dl <= dr ? n.left : n.right;
    const auto second = dl <= dr ? n.right : n.left;
    if (std::min(dl, dr) <= best.squared_distance) search_nearest(first, q, best);
    if (std::max(dl, dr) <= best.squared_distance) search_nearest(second, q, best);
  }

  // Same as search_nearest but only accepts d2 strictly below the initial bound.
  void search_nearest_bounded(std::int32_t id, const Point3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const double d2 = (coords_[i] - q).squaredNorm();
        const std::size_t idx = order_[i];
        if (d2 < best.squared_distance ||
            (d2 == best.squared_distance && idx < best.index &&
             best.index != std::numeric_limits<std::size_t>::max())) {
          best.squared_distance = d2;
          best.index = idx;
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left].box, q);
    const double dr = box_distance2(nodes_[n.right].box, q);
    const auto first = dl <= dr ? n.left : n.right;
    const auto second = dl <= dr ? n.right : n.left;
    if (std::min(dl, dr) <= best.squared_distance) search_nearest_bounded(first, q, best);
    if (std::max(dl, dr) <= best.squared_distance) search_nearest_bounded(second, q, best);
  }

  void search_knn(std::int32_t id, const Point3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    auto worst = [&] {
      return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().squared_distance;
    };
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        Neighbor cand{order_[i], (coords_[i] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), neighbor_less);
        } else if (neighbor_less(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), neighbor_less);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), neighbor_less);
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left].box, q);
    const double dr = box_distance2(nodes_[n.right].box, q);
    const auto first = dl <= dr ? n.left : n.right;
    const auto second = dl <= dr ? n.right : n.left;
    if (std::min(dl, dr) <= worst()) search_knn(first, q, k, heap);
    if (std::max(dl, dr) <= worst()) search_knn(second, q, k, heap);
  }

  void search_radius(std::int32_t id, const Point3& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[id];
    if (box_distance2(n.box, q) > r2) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        if ((coords_[i] - q).squaredNorm() <= r2) out.push_back(order_[i]);
      }
      return;
    }
    search_radius(n.left, q, r2, out);
    search_radius(n.right, q, r2, out);
  }

  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Point3> coords_;
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(const PointCloud& c) { return SpatialIndex(c.points); }

}  // namespace stocs
