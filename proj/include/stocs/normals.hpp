#pragma once

#include <Eigen/Eigenvalues>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

/// Orients `n` so that it faces `viewpoint` as seen from `p`.
inline UnitVector3 orient_toward(const UnitVector3& n, const Point3& p, const Point3& viewpoint) {
  return n.dot(viewpoint - p) < 0.0 ? UnitVector3(-n) : n;
}

/// Minor principal axis of the neighborhood of point `i` (the point plus its
/// k nearest neighbors), flipped toward `viewpoint`. A neighborhood whose
/// covariance has rank < 2 (duplicate depth samples) yields the unit
/// direction toward the viewpoint instead.
inline UnitVector3 local_normal(const PointCloud& c, const SpatialIndex& index, std::size_t i, std::size_t k,
                                const Point3& viewpoint) {
  const Point3& p = c.points[i];
  const auto nbrs = index.knn(p, k + 1);
  Point3 mean = Point3::Zero();
  for (const auto& nb : nbrs) mean += c.points[nb.index];
  mean /= static_cast<double>(nbrs.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& nb : nbrs) {
    const Point3 d = c.points[nb.index] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  eig.computeDirect(cov);
  const Eigen::Vector3d ev = eig.eigenvalues();
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    const Point3 toward = viewpoint - p;
    return toward.norm() > 0.0 ? UnitVector3(toward.normalized()) : UnitVector3::UnitZ();
  }
  return orient_toward(eig.eigenvectors().col(0).normalized(), p, viewpoint);
}

/// Normals for every point; see local_normal.
inline PointCloud estimate_normals(const PointCloud& c, std::size_t k, const Point3& viewpoint) {
  if (k < 3) throw Error(ErrorCode::InvalidArgument, "k must be at least 3");
  if (c.size() < k + 1) throw Error(ErrorCode::TooFewPoints, "cloud has fewer than k+1 points");

  const SpatialIndex index(c.points);
  PointCloud out = c;
  out.normals.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out.normals[i] = local_normal(c, index, i, k, viewpoint);
  return out;
}

}  // namespace stocs
