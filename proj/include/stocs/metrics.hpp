#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stocs/camera.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/heatmap.hpp"
#include "stocs/model.hpp"
#include "stocs/render.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

struct PoseError {
  double add = 0.0;
  double add_s = 0.0;
};

/// Mean distance between corresponding model points under the two poses.
inline double add_error(const RigidTransform& gt, const RigidTransform& pred, const ObjectModel& model) {
  if (model.cloud.empty()) throw Error(ErrorCode::EmptyCloud, "model is empty");
  double sum = 0.0;
  for (const auto& m : model.cloud.points) sum += (gt.apply(m) - pred.apply(m)).norm();
  return sum / static_cast<double>(model.cloud.size());
}

/// Mean distance from each ground-truth model point to the closest
/// predicted model point.
inline double add_s_error(const RigidTransform& gt, const RigidTransform& pred, const ObjectModel& model) {
  if (model.cloud.empty()) throw Error(ErrorCode::EmptyCloud, "model is empty");
  std::vector<Point3> moved;
  moved.reserve(model.cloud.size());
  for (const auto& m : model.cloud.points) moved.push_back(pred.apply(m));
  const SpatialIndex index(moved);
  double sum = 0.0;
  for (const auto& m : model.cloud.points) sum += index.nearest(gt.apply(m)).distance();
  return sum / static_cast<double>(model.cloud.size());
}

inline PoseError pose_error(const RigidTransform& gt, const RigidTransform& pred, const ObjectModel& model) {
  return {add_error(gt, pred, model), add_s_error(gt, pred, model)};
}

/// Strict: an error equal to the threshold is not correct.
inline bool pose_correct_add(const RigidTransform& gt, const RigidTransform& pred, const ObjectModel& model,
                             double fraction = 0.1) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must be in (0, 1)");
  return add_error(gt, pred, model) < fraction * model.diameter;
}

struct AccuracyCurve {
  std::vector<double> thresholds;  ///< ascending, meters
  std::vector<double> accuracies;  ///< fraction of errors strictly below each threshold
};

/// Accuracy at thresholds k * max_threshold / steps, k = 0..steps. An empty
/// error set gives an all-zero curve.
inline AccuracyCurve accuracy_curve(std::span<const double> errors, double max_threshold = 0.1,
                                    std::size_t steps = 100) {
  if (!(max_threshold > 0.0) || steps < 1) throw Error(ErrorCode::InvalidArgument, "bad curve range");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  AccuracyCurve curve;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = max_threshold * static_cast<double>(k) / static_cast<double>(steps);
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve.thresholds.push_back(t);
    curve.accuracies.push_back(sorted.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(sorted.size()));
  }
  return curve;
}

/// Trapezoidal area under the curve over [0, max_threshold], divided by
/// max_threshold. The first accuracy extends back to 0 and the last one
/// forward to max_threshold; points beyond max_threshold are clipped.
inline double auc(const AccuracyCurve& curve, double max_threshold = 0.1) {
  if (!(max_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "max threshold must be positive");
  if (curve.thresholds.size() != curve.accuracies.size() || curve.thresholds.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "curve needs matching, non-empty thresholds and accuracies");
  }
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, curve.accuracies.front());
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    const double t = curve.thresholds[i];
    if (i > 0 && t < curve.thresholds[i - 1]) throw Error(ErrorCode::InvalidArgument, "thresholds must ascend");
    if (t <= 0.0) {
      pts.front().second = curve.accuracies[i];
      continue;
    }
    if (t >= max_threshold) {
      // Interpolate onto the right edge and stop.
      const auto [t0, a0] = pts.back();
      const double a = t == t0 ? curve.accuracies[i] : a0 + (curve.accuracies[i] - a0) * (max_threshold - t0) / (t - t0);
      pts.emplace_back(max_threshold, a);
      break;
    }
    pts.emplace_back(t, curve.accuracies[i]);
  }
  if (pts.back().first < max_threshold) pts.emplace_back(max_threshold, pts.back().second);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  return std::clamp(area / max_threshold, 0.0, 1.0);
}

struct VsdParams {
  double tau = 0.02;
  double theta = 0.3;
  int stride = 1;            ///< evaluate every stride-th pixel in each direction
  double splat_radius = 0.0; ///< non-positive: default_splat_radius(model)
};

/// Visible surface discrepancy. Both poses are rendered; a rendered pixel is
/// visible when its depth is at most scene depth + tau (pixels without a
/// scene measurement count as visible). The error is the fraction of the
/// union of the two visibility masks where only one mask is set or the
/// rendered depths differ by tau or more.
inline double vsd_error(const RigidTransform& gt, const RigidTransform& pred, const ObjectModel& model,
                        const DepthImage& depth, const CameraIntrinsics& k, const VsdParams& params = {}) {
  if (!(params.tau > 0.0) || params.stride < 1) throw Error(ErrorCode::InvalidArgument, "bad VSD parameters");
  const double radius = params.splat_radius > 0.0 ? params.splat_radius : default_splat_radius(model);
  const auto r_gt = render_model_depth(model, gt, k, depth.width, depth.height, radius);
  const auto r_pred = render_model_depth(model, pred, k, depth.width, depth.height, radius);
  const auto visible = [&](double rendered, std::uint16_t scene) {
    return rendered > 0.0 && (scene == 0 || rendered <= scene * k.depth_scale + params.tau);
  };
  std::size_t gt_visible = 0, uni = 0, wrong = 0;
  for (int v = 0; v < depth.height; v += params.stride) {
    for (int u = 0; u < depth.width; u += params.stride) {
      const auto i = r_gt.index(u, v);
      const std::uint16_t s = depth.at(u, v);
      const bool a = visible(r_gt.depth[i], s);
      const bool b = visible(r_pred.depth[i], s);
      gt_visible += a;
      if (!a && !b) continue;
      ++uni;
      if (a != b || std::abs(r_gt.depth[i] - r_pred.depth[i]) >= params.tau) ++wrong;
    }
  }
  if (gt_visible == 0) throw Error(ErrorCode::NotVisible, "model is not visible under the ground-truth pose");
  return static_cast<double>(wrong) / static_cast<double>(uni);
}

inline bool pose_correct_vsd(double vsd, const VsdParams& params = {}) { return vsd < params.theta; }

/// Inclusive pixel rectangle.
struct PixelBox {
  int x_min = 0, y_min = 0, x_max = -1, y_max = -1;

  bool empty() const { return x_max < x_min || y_max < y_min; }
  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  PixelBox expanded(int by) const { return {x_min - by, y_min - by, x_max + by, y_max + by}; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Pixel at the center of the highest cell of the class map (first in
/// row-major order on ties).
inline Eigen::Vector2d heatmap_peak_pixel(const RawHeatmap& h, const std::string& class_id) {
  const auto& g = h.grids[h.class_index(class_id)];
  const auto cell = static_cast<int>(std::max_element(g.begin(), g.end()) - g.begin());
  const double s = h.scale_factor;
  return {s * (cell % h.width) + s / 2.0, s * (cell / h.width) + s / 2.0};
}

/// Hit when the peak pixel falls inside `bbox` grown by one heatmap cell
/// (the scale factor) on every side.
inline bool pointwise_localization(const RawHeatmap& h, const std::string& class_id, const PixelBox& bbox) {
  const Eigen::Vector2d peak = heatmap_peak_pixel(h, class_id);
  return bbox.expanded(h.scale_factor).contains(peak.x(), peak.y());
}

}  // namespace stocs
