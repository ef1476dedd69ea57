#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

// Deterministic surface samplers for synthetic test objects. Unions of
// primitives drop the samples that fall inside another primitive, which
// leaves the outer surface with outward normals.

namespace stocs::shapes {

struct Primitive {
  enum class Kind { Box, Cylinder, Sphere } kind = Kind::Box;
  Point3 center = Point3::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.05);  // box
  int axis = 2;                                                  // cylinder axis (0=x, 1=y, 2=z)
  double radius = 0.05;                                          // cylinder / sphere
  double half_length = 0.05;                                     // cylinder

  static Primitive box(const Point3& c, const Eigen::Vector3d& size) {
    Primitive p;
    p.kind = Kind::Box;
    p.center = c;
    p.half_extent = size / 2.0;
    return p;
  }
  static Primitive cylinder(const Point3& c, int axis, double radius, double length) {
    Primitive p;
    p.kind = Kind::Cylinder;
    p.center = c;
    p.axis = axis;
    p.radius = radius;
    p.half_length = length / 2.0;
    return p;
  }
  static Primitive sphere(const Point3& c, double radius) {
    Primitive p;
    p.kind = Kind::Sphere;
    p.center = c;
    p.radius = radius;
    return p;
  }

  /// Strictly inside, shrunk by `margin`.
  bool contains(const Point3& q, double margin) const {
    const Eigen::Vector3d d = q - center;
    switch (kind) {
      case Kind::Box:
        return (d.cwiseAbs() - half_extent).maxCoeff() < -margin;
      case Kind::Cylinder: {
        const double along = d(axis);
        const double radial = std::sqrt(d.squaredNorm() - along * along);
        return std::abs(along) < half_length - margin && radial < radius - margin;
      }
      case Kind::Sphere:
        return d.norm() < radius - margin;
    }
    return false;
  }

  void sample(double h, PointCloud& out) const {
    switch (kind) {
      case Kind::Box: sample_box(h, out); break;
      case Kind::Cylinder: sample_cylinder(h, out); break;
      case Kind::Sphere: sample_sphere(h, out); break;
    }
  }

 private:
  void sample_box(double h, PointCloud& out) const {
    for (int a = 0; a < 3; ++a) {
      const int b = (a + 1) % 3, c = (a + 2) % 3;
      const int nb = std::max(1, static_cast<int>(std::ceil(2 * half_extent(b) / h)));
      const int nc = std::max(1, static_cast<int>(std::ceil(2 * half_extent(c) / h)));
      for (int side : {-1, 1}) {
        for (int i = 0; i <= nb; ++i) {
          for (int j = 0; j <= nc; ++j) {
            Eigen::Vector3d q;
            q(a) = side * half_extent(a);
            q(b) = -half_extent(b) + 2 * half_extent(b) * i / nb;
            q(c) = -half_extent(c) + 2 * half_extent(c) * j / nc;
            // Edge samples belong to one face only.
            if ((i == 0 || i == nb) && b < a) continue;
            if ((j == 0 || j == nc) && c < a) continue;
            Eigen::Vector3d n = Eigen::Vector3d::Zero();
            n(a) = side;
            out.points.push_back(center + q);
            out.normals.push_back(n);
          }
        }
      }
    }
  }

  void sample_cylinder(double h, PointCloud& out) const {
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    const int ring = std::max(8, static_cast<int>(std::ceil(2 * std::numbers::pi * radius / h)));
    const int rows = std::max(1, static_cast<int>(std::ceil(2 * half_length / h)));
    for (int i = 0; i <= rows; ++i) {
      for (int j = 0; j < ring; ++j) {
        const double t = 2 * std::numbers::pi * j / ring;
        Eigen::Vector3d n = Eigen::Vector3d::Zero();
        n(b) = std::cos(t);
        n(c) = std::sin(t);
        Eigen::Vector3d q = radius * n;
        q(axis) = -half_length + 2 * half_length * i / rows;
        out.points.push_back(center + q);
        out.normals.push_back(n);
      }
    }
    const int rings = std::max(1, static_cast<int>(std::floor(radius / h)));
    for (int side : {-1, 1}) {
      for (int r = 0; r < rings; ++r) {
        const double rr = radius * r / rings;
        const int m = r == 0 ? 1 : std::max(6, static_cast<int>(std::ceil(2 * std::numbers::pi * rr / h)));
        for (int j = 0; j < m; ++j) {
          const double t = 2 * std::numbers::pi * j / m;
          Eigen::Vector3d q = Eigen::Vector3d::Zero();
          q(b) = rr * std::cos(t);
          q(c) = rr * std::sin(t);
          q(axis) = side * half_length;
          Eigen::Vector3d n = Eigen::Vector3d::Zero();
          n(axis) = side;
          out.points.push_back(center + q);
          out.normals.push_back(n);
        }
      }
    }
  }

  void sample_sphere(double h, PointCloud& out) const {
    // Fibonacci lattice with roughly h spacing.
    const int n = std::max(12, static_cast<int>(std::ceil(4 * std::numbers::pi * radius * radius / (h * h))));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / n;
      const double rr = std::sqrt(1.0 - z * z);
      const double t = golden * i;
      const Eigen::Vector3d dir(rr * std::cos(t), rr * std::sin(t), z);
      out.points.push_back(center + radius * dir);
      out.normals.push_back(dir);
    }
  }
};

/// Outer surface of a union of primitives sampled at spacing `h`, recentered
/// on the bounding-box center.
inline PointCloud sample_union(const std::vector<Primitive>& parts, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample spacing must be positive");
  PointCloud out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    PointCloud local;
    parts[i].sample(h, local);
    for (std::size_t k = 0; k < local.size(); ++k) {
      bool hidden = false;
      for (std::size_t j = 0; j < parts.size() && !hidden; ++j) {
        if (j != i && parts[j].contains(local.points[k], 1e-9)) hidden = true;
      }
      if (!hidden) {
        out.points.push_back(local.points[k]);
        out.normals.push_back(local.normals[k]);
      }
    }
  }
  Eigen::AlignedBox3d box;
  for (const auto& p : out.points) box.extend(p);
  const Point3 c = box.center();
  for (auto& p : out.points) p -= c;
  return out;
}

/// Names accepted by `make_shape`.
inline std::vector<std::string> shape_names() { return {"bracket", "drill", "step", "tee", "box", "cylinder", "sphere"}; }

/// Built-in test objects, 10-16 cm across. The first four have no rotational
/// symmetry.
inline PointCloud make_shape(const std::string& name, double h = 0.002) {
  using P = Primitive;
  using V = Eigen::Vector3d;
  if (name == "bracket") {
    return sample_union({P::box({0, 0, 0}, V(0.12, 0.04, 0.035)), P::box({0.04, 0.045, 0}, V(0.04, 0.05, 0.035)),
                         P::cylinder({-0.04, 0, 0.03}, 2, 0.012, 0.03)},
                        h);
  }
  if (name == "drill") {
    return sample_union({P::cylinder({0, 0, 0}, 0, 0.028, 0.13), P::box({-0.03, -0.055, 0}, V(0.035, 0.07, 0.03)),
                         P::box({-0.03, -0.095, 0.01}, V(0.06, 0.025, 0.05)),
                         P::cylinder({0.075, 0, 0}, 0, 0.008, 0.03)},
                        h);
  }
  if (name == "step") {
    return sample_union({P::box({0, 0, 0}, V(0.12, 0.08, 0.03)), P::box({0.02, 0.01, 0.03}, V(0.08, 0.06, 0.03)),
                         P::box({0.04, 0.025, 0.06}, V(0.04, 0.03, 0.03))},
                        h);
  }
  if (name == "tee") {
    return sample_union({P::box({0, 0, 0}, V(0.14, 0.035, 0.035)), P::box({0.025, -0.05, 0}, V(0.035, 0.07, 0.035)),
                         P::sphere({-0.05, 0.0, 0.02}, 0.02)},
                        h);
  }
  if (name == "box") return sample_union({P::box({0, 0, 0}, V(0.10, 0.06, 0.04))}, h);
  if (name == "cylinder") return sample_union({P::cylinder({0, 0, 0}, 2, 0.04, 0.10)}, h);
  if (name == "sphere") return sample_union({P::sphere({0, 0, 0}, 0.05)}, h);
  throw Error(ErrorCode::InvalidArgument, "unknown shape '" + name + "'");
}

}  // namespace stocs::shapes
