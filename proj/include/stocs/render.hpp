#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "stocs/camera.hpp"
#include "stocs/geometry.hpp"
#include "stocs/model.hpp"

namespace stocs {

/// Floating-point z-buffer with the index of the surface that won each pixel.
/// Depth 0 means empty.
struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<int> owner;

  DepthBuffer(int w, int h)
      : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0),
        owner(static_cast<std::size_t>(w) * h, -1) {}

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }

  void write(int u, int v, double z, int who) {
    const auto i = index(u, v);
    if (depth[i] == 0.0 || z < depth[i]) {
      depth[i] = z;
      owner[i] = who;
    }
  }
};

/// Splats each oriented point as a disc of `radius` (meters) in its tangent
/// plane. Each covered pixel receives the depth where its viewing ray meets
/// the disc, so planar surfaces render exactly. Back-facing discs are culled.
inline void splat_surfels(DepthBuffer& buffer, const PointCloud& cloud, const RigidTransform& pose,
                          const CameraIntrinsics& k, double radius, int owner) {
  const Eigen::Matrix3d r = pose.rotation_matrix();
  const double r2 = radius * radius;
  const bool normals = cloud.has_normals();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 p = r * cloud.points[i] + pose.translation();
    if (p.z() <= 1e-6) continue;
    const Eigen::Vector3d n = normals ? Eigen::Vector3d(r * cloud.normals[i]) : Eigen::Vector3d(-p.normalized());
    if (n.dot(p) >= 0.0) continue;
    const Eigen::Vector2d c = k.project(p);
    const double reach = radius / std::max(p.z() - radius, 1e-3);
    const int u0 = static_cast<int>(std::floor(c.x() - k.fx * reach)) - 1;
    const int u1 = static_cast<int>(std::ceil(c.x() + k.fx * reach)) + 1;
    const int v0 = static_cast<int>(std::floor(c.y() - k.fy * reach)) - 1;
    const int v1 = static_cast<int>(std::ceil(c.y() + k.fy * reach)) + 1;
    const double np = n.dot(p);
    for (int v = std::max(v0, 0); v <= std::min(v1, buffer.height - 1); ++v) {
      for (int u = std::max(u0, 0); u <= std::min(u1, buffer.width - 1); ++u) {
        const Eigen::Vector3d ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const double denom = n.dot(ray);
        if (std::abs(denom) < 1e-9) continue;
        const double z = np / denom;
        if (z <= 0.0) continue;
        if ((ray * z - p).squaredNorm() > r2) continue;
        buffer.write(u, v, z, owner);
      }
    }
  }
}

/// Renders a single model's depth under `pose`.
inline DepthBuffer render_model_depth(const ObjectModel& model, const RigidTransform& pose,
                                      const CameraIntrinsics& k, int width, int height, double radius) {
  DepthBuffer buffer(width, height);
  splat_surfels(buffer, model.cloud, pose, k, radius, 0);
  return buffer;
}

/// Splat radius that closes the gaps of a subsampled model cloud.
inline double default_splat_radius(const ObjectModel& model) { return 1.15 * model_resolution(model); }

}  // namespace stocs
