#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stocs/camera.hpp"
#include "stocs/estimator.hpp"
#include "stocs/heatmap.hpp"
#include "stocs/icp.hpp"
#include "stocs/model.hpp"
#include "stocs/normals.hpp"
#include "stocs/spatial_index.hpp"

namespace stocs {

struct SceneOptions {
  int stride = 2;               ///< back-projection pixel stride
  std::size_t normal_k = 12;    ///< neighbors for normal estimation
};

/// A depth scene ready for estimation of one class.
struct PreparedScene {
  PointCloud cloud;                 ///< normals on every point
  std::vector<double> probabilities;
};

/// Back-projects the depth image and attaches class probabilities. Normals
/// are estimated for the points with positive probability (the only ones a
/// base can use); the others face the camera.
inline PreparedScene prepare_scene(const DepthImage& depth, const CameraIntrinsics& k, const ProbabilityHeatmap& heatmap,
                                   const std::string& class_id, const SceneOptions& opts = {}) {
  PreparedScene scene;
  scene.cloud = backproject(depth, k, opts.stride);
  scene.probabilities = annotate_cloud(scene.cloud, heatmap, class_id);
  const Point3 eye = Point3::Zero();
  scene.cloud.normals.resize(scene.cloud.size());
  const bool enough = scene.cloud.size() > opts.normal_k;
  const std::optional<SpatialIndex> index =
      enough ? std::optional<SpatialIndex>(std::in_place, scene.cloud.points) : std::nullopt;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    if (enough && scene.probabilities[i] > 0.0) {
      scene.cloud.normals[i] = local_normal(scene.cloud, *index, i, opts.normal_k, eye);
    } else {
      scene.cloud.normals[i] = (eye - scene.cloud.points[i]).normalized();
    }
  }
  return scene;
}

struct EstimateResult {
  PoseHypothesis hypothesis;
  EstimateStats stats;
  std::optional<IcpResult> icp;

  const RigidTransform& pose() const { return icp ? icp->transform : hypothesis.transform; }
};

/// Pose search followed by optional ICP refinement against the whole scene.
inline EstimateResult estimate_in_scene(const PreparedScene& scene, const ObjectModel& model, const StocsConfig& cfg,
                                        const std::optional<IcpConfig>& icp = std::nullopt) {
  EstimateResult r;
  r.hypothesis = estimate_pose({scene.cloud, scene.probabilities}, model, cfg, &r.stats);
  if (icp) {
    const SpatialIndex index(scene.cloud.points);
    r.icp = refine(r.hypothesis.transform, model, scene.cloud, index, *icp);
  }
  return r;
}

}  // namespace stocs
