#pragma once

#include <cstdint>
#include <vector>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

/// Pinhole intrinsics; depth_scale converts stored depth units to meters.
struct CameraIntrinsics {
  double fx = 572.4;
  double fy = 572.4;
  double cx = 320.0;
  double cy = 240.0;
  double depth_scale = 0.0001;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0 && depth_scale > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "intrinsics need fx, fy, depth_scale > 0");
    }
  }

  /// Continuous image coordinates of a camera-frame point (z > 0).
  Eigen::Vector2d project(const Point3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  /// Camera-frame point on the ray through (u, v) at depth z.
  Point3 unproject(double u, double v, double z) const {
    return {(u - cx) * z / fx, (v - cy) * z / fy, z};
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Row-major 16-bit depth; 0 marks an invalid pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint16_t at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::uint16_t& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }

  friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

/// Back-projects every valid pixel on the stride grid. The result records
/// each point's source pixel.
inline PointCloud backproject(const DepthImage& depth, const CameraIntrinsics& k, int stride = 1) {
  if (stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
  k.validate();
  if (depth.data.size() != static_cast<std::size_t>(depth.width) * depth.height) {
    throw Error(ErrorCode::DimensionMismatch, "depth buffer size does not match width*height");
  }
  PointCloud cloud;
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const std::uint16_t raw = depth.at(u, v);
      if (raw == 0) continue;
      cloud.points.push_back(k.unproject(u, v, raw * k.depth_scale));
      cloud.pixels.push_back({u, v});
    }
  }
  if (cloud.empty()) throw Error(ErrorCode::AllPixelsInvalid, "depth image has no valid pixels");
  return cloud;
}

}  // namespace stocs
