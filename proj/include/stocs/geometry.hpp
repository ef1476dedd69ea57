#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "stocs/error.hpp"

namespace stocs {

/// Position in meters.
using Point3 = Eigen::Vector3d;
/// Direction with unit norm (normals).
using UnitVector3 = Eigen::Vector3d;

/// Integer image coordinate; u is the column, v the row.
struct Pixel {
  int u = 0;
  int v = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Rotation (unit quaternion) followed by translation. The quaternion is
/// renormalized on construction and after every composition.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Eigen::Quaterniond::Identity()), translation_(Point3::Zero()) {}

  RigidTransform(const Eigen::Quaterniond& rotation, const Point3& translation)
      : rotation_(rotation.normalized()), translation_(translation) {
    if (rotation_.w() < 0.0) rotation_.coeffs() = -rotation_.coeffs();
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Eigen::Matrix3d& rotation, const Point3& translation) {
    return {Eigen::Quaterniond(rotation), translation};
  }

  static RigidTransform from_translation(const Point3& translation) {
    return {Eigen::Quaterniond::Identity(), translation};
  }

  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                        const Point3& translation = Point3::Zero()) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), translation};
  }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Point3& translation() const { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  UnitVector3 rotate(const UnitVector3& n) const { return rotation_ * n; }

  /// (a * b)(p) == a(b(p)).
  RigidTransform operator*(const RigidTransform& b) const {
    return {rotation_ * b.rotation_, rotation_ * b.translation_ + translation_};
  }

  RigidTransform inverse() const {
    const Eigen::Quaterniond inv = rotation_.conjugate();
    return {inv, -(inv * translation_)};
  }

  /// Rotation angle of this transform in radians, in [0, pi].
  double angle() const {
    return 2.0 * std::atan2(rotation_.vec().norm(), std::abs(rotation_.w()));
  }

 private:
  Eigen::Quaterniond rotation_;
  Point3 translation_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

/// Points with optional per-point normals and optional source pixels.
/// `normals` and `pixels` are either empty or the same length as `points`.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<UnitVector3> normals;
  std::vector<Pixel> pixels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
  bool has_pixels() const { return !pixels.empty() && pixels.size() == points.size(); }

  /// Keeps the entries at `indices`, in that order, across all attributes.
  PointCloud select(std::span<const std::size_t> indices) const {
    PointCloud out;
    out.points.reserve(indices.size());
    for (auto i : indices) out.points.push_back(points[i]);
    if (has_normals()) {
      out.normals.reserve(indices.size());
      for (auto i : indices) out.normals.push_back(normals[i]);
    }
    if (has_pixels()) {
      out.pixels.reserve(indices.size());
      for (auto i : indices) out.pixels.push_back(pixels[i]);
    }
    return out;
  }
};

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
  PointCloud out = c;
  const Eigen::Matrix3d r = t.rotation_matrix();
  for (auto& p : out.points) p = r * p + t.translation();
  for (auto& n : out.normals) n = r * n;
  return out;
}

inline Point3 centroid(std::span<const Point3> points) {
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  return points.empty() ? c : Point3(c / static_cast<double>(points.size()));
}

/// Least-squares rigid transform T minimizing sum |T(src_i) - dst_i|^2
/// (Kabsch with reflection correction). Throws DegenerateConfiguration when
/// the source points are collinear or coincident.
inline RigidTransform best_rigid_alignment(std::span<const Point3> src, std::span<const Point3> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::DimensionMismatch, "source and destination sizes differ");
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::DegenerateConfiguration, "at least three correspondences are required");
  }
  const Point3 cs = centroid(src);
  const Point3 cd = centroid(dst);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point3 a = src[i] - cs;
    cov += (dst[i] - cd) * a.transpose();
    spread += a * a.transpose();
  }

  // Rank check on the source spread: need two non-negligible directions.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(spread);
  const Eigen::Vector3d ev = eig.eigenvalues();
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw Error(ErrorCode::DegenerateConfiguration, "source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  const Eigen::Matrix3d r = u * v.transpose();
  return RigidTransform::from_matrix(r, cd - r * cs);
}

/// Root-mean-square residual of `t` over corresponding points.
inline double alignment_rms(const RigidTransform& t, std::span<const Point3> src,
                            std::span<const Point3> dst) {
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  return src.empty() ? 0.0 : std::sqrt(sum / static_cast<double>(src.size()));
}

}  // namespace stocs
