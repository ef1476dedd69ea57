#pragma once

#include <cmath>
#include <vector>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/model.hpp"
#include "stocs/render.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

/// Non-positive cutoff means twice the default scoring tolerance.
struct IcpConfig {
  std::size_t max_iterations = 50;
  double cutoff = 0.0;        ///< correspondence distance limit, meters
  double convergence = 1e-5;  ///< stop when the mean distance improves by less, meters
  double min_overlap = 0.1;   ///< fraction of model points that must find a partner
  /// Skip model points whose normal faces away from a camera at the origin.
  bool cull_back_faces = true;
  /// Skip model points hidden behind other parts of the posed model.
  bool cull_self_occluded = true;
  /// Minimize distances along the model normals; false gives the classic
  /// point-to-point update.
  bool point_to_plane = true;

  IcpConfig resolved(const ObjectModel& model) const {
    IcpConfig c = *this;
    if (!(c.cutoff > 0.0)) c.cutoff = 2.0 * std::max(0.005, 0.01 * model.diameter);
    if (c.max_iterations < 1 || !(c.convergence > 0.0) || !(c.min_overlap > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "ICP iterations, convergence and overlap must be positive");
    }
    return c;
  }
};

struct IcpResult {
  RigidTransform transform;
  std::size_t iterations = 0;           ///< accepted updates
  bool converged = false;               ///< stopped before the iteration limit
  std::vector<double> mean_distance;    ///< at the initial pose, then after each accepted update
};

namespace detail {

struct Correspondences {
  std::vector<Point3> model;
  std::vector<std::size_t> model_index;
  std::vector<Point3> scene;
  double mean = 0.0;
};

/// Marks the model points that win a z-buffer of the posed model seen from
/// the origin. The virtual camera has pixels of half the model resolution at
/// the nearest point, so visibility does not depend on the scene camera.
inline std::vector<char> self_visible(const RigidTransform& t, const ObjectModel& model, double resolution) {
  const std::size_t n = model.cloud.size();
  std::vector<char> visible(n, 1);
  std::vector<Point3> posed(n);
  double z_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    posed[i] = t.apply(model.cloud.points[i]);
    if (posed[i].z() <= 0.0) return visible;
    z_min = std::min(z_min, posed[i].z());
  }
  const double radius = 1.15 * resolution;
  if (!(resolution > 0.0) || z_min <= 2.0 * radius) return visible;

  constexpr double kMaxSide = 2048.0;
  double f = 2.0 * z_min / resolution;
  double u_lo = std::numeric_limits<double>::infinity(), u_hi = -u_lo, v_lo = u_lo, v_hi = -u_lo;
  for (const auto& p : posed) {
    u_lo = std::min(u_lo, p.x() / p.z());
    u_hi = std::max(u_hi, p.x() / p.z());
    v_lo = std::min(v_lo, p.y() / p.z());
    v_hi = std::max(v_hi, p.y() / p.z());
  }
  const double reach = radius / (z_min - radius);
  f = std::min(f, kMaxSide / (std::max(u_hi - u_lo, v_hi - v_lo) + 2.0 * reach + 1e-12));
  CameraIntrinsics k;
  k.fx = k.fy = f;
  const double margin = f * reach + 2.0;
  k.cx = margin - f * u_lo;
  k.cy = margin - f * v_lo;
  DepthBuffer buffer(static_cast<int>(std::ceil(f * (u_hi - u_lo) + 2.0 * margin)) + 1,
                     static_cast<int>(std::ceil(f * (v_hi - v_lo) + 2.0 * margin)) + 1);
  splat_surfels(buffer, model.cloud, t, k, radius, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d uv = k.project(posed[i]);
    const int u = static_cast<int>(std::lround(uv.x())), v = static_cast<int>(std::lround(uv.y()));
    const double z = buffer.depth[buffer.index(u, v)];
    visible[i] = z == 0.0 || posed[i].z() <= z + resolution;
  }
  return visible;
}

inline Correspondences correspond(const RigidTransform& t, const ObjectModel& model, const PointCloud& scene,
                                  const SpatialIndex& index, const IcpConfig& cfg, double resolution) {
  Correspondences c;
  double sum = 0.0;
  const bool cull = cfg.cull_back_faces && model.cloud.has_normals();
  const auto visible = cfg.cull_self_occluded && model.cloud.has_normals() ? self_visible(t, model, resolution)
                                                                          : std::vector<char>(model.cloud.size(), 1);
  for (std::size_t i = 0; i < model.cloud.size(); ++i) {
    const Point3 p = t.apply(model.cloud.points[i]);
    if (cull && t.rotate(model.cloud.normals[i]).dot(p) >= 0.0) continue;
    if (!visible[i]) continue;
    if (const auto nb = index.nearest_within(p, cfg.cutoff)) {
      c.model.push_back(model.cloud.points[i]);
      c.model_index.push_back(i);
      c.scene.push_back(scene.points[nb->index]);
      sum += nb->distance();
    }
  }
  c.mean = c.model.empty() ? 0.0 : sum / static_cast<double>(c.model.size());
  return c;
}

/// Weight of the point-to-point rows; keeps the tangential directions of planar views observable.
inline constexpr double kPointWeight = 0.01;

/// Cross-product matrix: skew(p) * w == p.cross(w).
inline Eigen::Matrix3d skew(const Eigen::Vector3d& p) {
  Eigen::Matrix3d m;
  m << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
  return m;
}

/// One Gauss-Newton step, linearized about the current pose `t` and the
/// centroid of the posed correspondences, of the point-to-plane objective
/// plus a lightly weighted point-to-point term. The second term pins the
/// directions a surface leaves free (sliding along a plane, spinning about
/// an axis of symmetry).
inline RigidTransform point_to_plane_step(const RigidTransform& t, const ObjectModel& model, const Correspondences& c) {
  Point3 center = Point3::Zero();
  for (const auto& m : c.model) center += t.apply(m);
  center /= static_cast<double>(c.model.size());
  Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t j = 0; j < c.model.size(); ++j) {
    const Point3 p = t.apply(c.model[j]) - center;
    const Point3 q = c.scene[j] - center;
    const Eigen::Vector3d n = t.rotate(model.cloud.normals[c.model_index[j]]);
    Eigen::Matrix<double, 6, 1> row;
    row << p.cross(n), n;
    a += row * row.transpose();
    b -= row * (p - q).dot(n);
    Eigen::Matrix<double, 3, 6> jac;
    jac << -skew(p), Eigen::Matrix3d::Identity();
    a += kPointWeight * jac.transpose() * jac;
    b -= kPointWeight * jac.transpose() * (p - q);
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(a);
  if (lu.rank() < 6) throw Error(ErrorCode::DegenerateConfiguration, "ICP system is rank deficient");
  const Eigen::Matrix<double, 6, 1> x = lu.solve(b);
  const Eigen::Vector3d w = x.head<3>();
  const Eigen::Quaterniond dq =
      w.norm() > 0.0 ? Eigen::Quaterniond(Eigen::AngleAxisd(w.norm(), w.normalized())) : Eigen::Quaterniond::Identity();
  // p -> dq (p - center) + center + x.tail
  const RigidTransform step(dq, center + x.tail<3>() - dq * center);
  return step * t;
}

}  // namespace detail

/// ICP from `initial` against visible, front-facing model points. An update
/// is accepted only when it does not increase the mean point-to-point
/// correspondence distance, so the recorded sequence is non-increasing.
inline IcpResult refine(const RigidTransform& initial, const ObjectModel& model, const PointCloud& scene,
                        const SpatialIndex& scene_index, const IcpConfig& config = {}) {
  const IcpConfig cfg = config.resolved(model);
  const auto enough = [&](const detail::Correspondences& c) {
    return c.model.size() >= 3 &&
           static_cast<double>(c.model.size()) >= cfg.min_overlap * static_cast<double>(model.cloud.size());
  };

  const double resolution = cfg.cull_self_occluded ? model_resolution(model) : 0.0;

  IcpResult result;
  result.transform = initial;
  auto corr = detail::correspond(initial, model, scene, scene_index, cfg, resolution);
  if (!enough(corr)) {
    throw Error(ErrorCode::InsufficientOverlap, "too few model points near the scene at the initial pose");
  }
  result.mean_distance.push_back(corr.mean);

  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    RigidTransform next;
    try {
      next = cfg.point_to_plane && model.cloud.has_normals() ? detail::point_to_plane_step(result.transform, model, corr)
                                                             : best_rigid_alignment(corr.model, corr.scene);
    } catch (const Error&) {
      break;
    }
    auto next_corr = detail::correspond(next, model, scene, scene_index, cfg, resolution);
    // A full step can raise the mean when the correspondence set changes;
    // shorter steps along the same motion are tried before giving up.
    for (double step = 0.5; step >= 0.125 && (!enough(next_corr) || next_corr.mean > corr.mean); step *= 0.5) {
      const RigidTransform& cur = result.transform;
      next = RigidTransform(cur.rotation().slerp(step, next.rotation()),
                            cur.translation() + step * (next.translation() - cur.translation()));
      next_corr = detail::correspond(next, model, scene, scene_index, cfg, resolution);
    }
    if (!enough(next_corr) || next_corr.mean > corr.mean) break;
    const double gain = corr.mean - next_corr.mean;
    result.transform = next;
    corr = std::move(next_corr);
    result.mean_distance.push_back(corr.mean);
    ++result.iterations;
    if (gain < cfg.convergence) break;
  }
  result.converged = result.iterations < cfg.max_iterations;
  return result;
}

}  // namespace stocs
