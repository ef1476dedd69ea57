#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stocs/camera.hpp"
#include "stocs/error.hpp"
#include "stocs/geometry.hpp"
#include "stocs/heatmap.hpp"
#include "stocs/image_io.hpp"
#include "stocs/metrics.hpp"
#include "stocs/model.hpp"
#include "stocs/pose_io.hpp"
#include "stocs/render.hpp"
#include "stocs/rng.hpp"

namespace stocs {

/// One object of a scene: an index into the model list and either a fixed
/// pose or none (drawn at random).
struct SceneObject {
  std::size_t model = 0;
  std::optional<RigidTransform> pose;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  CameraIntrinsics intrinsics;
  int width = 640;
  int height = 480;
  double noise_sigma = 0.0;       ///< additive Gaussian depth noise, meters
  std::uint64_t seed = 0;
  double background_depth = 0.0;  ///< fronto-parallel wall at this depth; 0 = none
  double min_distance = 0.5;      ///< random poses: camera-to-object distance range
  double max_distance = 0.9;
  /// Random poses: projected discs (diameter-sized) of two objects may not
  /// have centers closer than this fraction of the sum of their radii.
  double min_separation = 0.8;
  int border = 4;                 ///< random poses keep every model point this far inside the image
};

struct GroundTruthObject {
  std::string class_id;
  RigidTransform pose;
  std::vector<std::uint8_t> mask;  ///< row-major, 1 where the object won the z-buffer
  PixelBox bbox;                   ///< tight bound of the mask; empty when fully occluded
  std::size_t visible_pixels = 0;
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<GroundTruthObject> objects;

  const GroundTruthObject& find(const std::string& class_id) const {
    for (const auto& o : objects)
      if (o.class_id == class_id) return o;
    throw Error(ErrorCode::UnknownClass, "no ground truth for class '" + class_id + "'");
  }
};

struct SimulatedScene {
  DepthImage depth;
  GroundTruth truth;
};

/// Uniform random rotation composed as a viewing direction on the sphere
/// followed by an in-plane rotation about the optical axis.
inline Eigen::Quaterniond random_view_rotation(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Eigen::Vector3d view(r * std::cos(phi), r * std::sin(phi), z);  // camera position, object frame
  const Eigen::Quaterniond look = Eigen::Quaterniond::FromTwoVectors(-view, Eigen::Vector3d::UnitZ());
  const Eigen::Quaterniond roll(Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * std::numbers::pi), Eigen::Vector3d::UnitZ()));
  return (roll * look).normalized();
}

namespace detail {

inline bool inside_frustum(const ObjectModel& model, const RigidTransform& pose, const SceneSpec& spec, int border) {
  for (const auto& m : model.cloud.points) {
    const Point3 p = pose.apply(m);
    if (p.z() <= 0.0) return false;
    const Eigen::Vector2d px = spec.intrinsics.project(p);
    if (px.x() < border || px.y() < border || px.x() > spec.width - 1 - border || px.y() > spec.height - 1 - border) {
      return false;
    }
  }
  return true;
}

inline bool any_in_frustum(const ObjectModel& model, const RigidTransform& pose, const SceneSpec& spec) {
  for (const auto& m : model.cloud.points) {
    const Point3 p = pose.apply(m);
    if (p.z() <= 0.0) continue;
    const Eigen::Vector2d px = spec.intrinsics.project(p);
    if (px.x() >= 0 && px.y() >= 0 && px.x() < spec.width && px.y() < spec.height) return true;
  }
  return false;
}

struct Disc {
  Eigen::Vector2d center;
  double radius;
};

inline Disc projected_disc(const ObjectModel& model, const RigidTransform& pose, const CameraIntrinsics& k) {
  const Point3 c = pose.translation();
  return {k.project(c), 0.5 * model.diameter * k.fx / c.z()};
}

}  // namespace detail

/// Renders every object into one z-buffer, records per-object visibility
/// masks, then adds depth noise and quantizes to the 16-bit format.
/// Randomness is drawn from separate streams for poses and noise.
inline SimulatedScene render_scene(const SceneSpec& spec, const std::vector<ObjectModel>& models) {
  if (spec.objects.empty()) throw Error(ErrorCode::InvalidArgument, "scene needs at least one object");
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  if (spec.width <= 0 || spec.height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  if (!(spec.min_distance > 0.0 && spec.min_distance <= spec.max_distance)) {
    throw Error(ErrorCode::InvalidArgument, "bad distance range");
  }
  spec.intrinsics.validate();
  for (const auto& o : spec.objects) {
    if (o.model >= models.size()) throw Error(ErrorCode::InvalidArgument, "object refers to a missing model");
  }

  Rng pose_rng(stream_seed(spec.seed, 0));
  std::vector<RigidTransform> poses;
  std::vector<detail::Disc> discs;
  for (const auto& o : spec.objects) {
    const ObjectModel& model = models[o.model];
    if (o.pose) {
      if (!detail::any_in_frustum(model, *o.pose, spec)) {
        throw Error(ErrorCode::ObjectOutOfFrustum, "object '" + model.id + "' is outside the view");
      }
      poses.push_back(*o.pose);
      discs.push_back(detail::projected_disc(model, *o.pose, spec.intrinsics));
      continue;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Eigen::Quaterniond rot = random_view_rotation(pose_rng);
      const double z = pose_rng.uniform(spec.min_distance, spec.max_distance);
      const double u = pose_rng.uniform(0.0, spec.width);
      const double v = pose_rng.uniform(0.0, spec.height);
      const RigidTransform pose(rot, spec.intrinsics.unproject(u, v, z));
      if (!detail::inside_frustum(model, pose, spec, spec.border)) continue;
      const auto disc = detail::projected_disc(model, pose, spec.intrinsics);
      bool clear = true;
      for (const auto& d : discs) {
        if ((d.center - disc.center).norm() < spec.min_separation * (d.radius + disc.radius)) clear = false;
      }
      if (!clear) continue;
      poses.push_back(pose);
      discs.push_back(disc);
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::ObjectOutOfFrustum, "could not place object '" + model.id + "' in view");
  }

  DepthBuffer buffer(spec.width, spec.height);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectModel& model = models[spec.objects[i].model];
    splat_surfels(buffer, model.cloud, poses[i], spec.intrinsics, default_splat_radius(model), static_cast<int>(i));
  }
  if (spec.background_depth > 0.0) {
    for (int v = 0; v < spec.height; ++v)
      for (int u = 0; u < spec.width; ++u) buffer.write(u, v, spec.background_depth, -1);
  }

  SimulatedScene scene;
  scene.truth.width = spec.width;
  scene.truth.height = spec.height;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    GroundTruthObject o;
    o.class_id = models[spec.objects[i].model].id;
    o.pose = poses[i];
    o.mask.assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
    scene.truth.objects.push_back(std::move(o));
  }
  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const int who = buffer.owner[buffer.index(u, v)];
      if (who < 0 || buffer.depth[buffer.index(u, v)] == 0.0) continue;
      auto& o = scene.truth.objects[static_cast<std::size_t>(who)];
      o.mask[buffer.index(u, v)] = 1;
      if (o.visible_pixels++ == 0) {
        o.bbox = {u, v, u, v};
      } else {
        o.bbox = {std::min(o.bbox.x_min, u), std::min(o.bbox.y_min, v), std::max(o.bbox.x_max, u),
                  std::max(o.bbox.y_max, v)};
      }
    }
  }

  Rng noise_rng(stream_seed(spec.seed, 1));
  scene.depth = DepthImage(spec.width, spec.height);
  for (std::size_t i = 0; i < buffer.depth.size(); ++i) {
    double z = buffer.depth[i];
    if (z <= 0.0) continue;
    if (spec.noise_sigma > 0.0) z += spec.noise_sigma * noise_rng.normal();
    const double raw = std::round(z / spec.intrinsics.depth_scale);
    scene.depth.data[i] = static_cast<std::uint16_t>(std::clamp(raw, 1.0, 65535.0));
  }
  return scene;
}

/// Synthetic heatmap flavors: exact mask occupancy, occupancy smoothed by a
/// 3x3 box filter, or occupancy with a fraction of cells replaced by noise.
struct HeatmapMode {
  enum class Kind { Perfect, Blurred, Corrupted } kind = Kind::Perfect;
  double fraction = 0.0;

  /// "perfect", "blurred" or "corrupted:<p>" with p in [0, 1].
  static HeatmapMode parse(const std::string& text) {
    if (text == "perfect") return {};
    if (text == "blurred") return {Kind::Blurred, 0.0};
    const std::string prefix = "corrupted:";
    if (text.rfind(prefix, 0) == 0) {
      std::size_t used = 0;
      double p = -1.0;
      try {
        p = std::stod(text.substr(prefix.size()), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size() - prefix.size() || !(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "corruption fraction must be a number in [0, 1]");
      }
      return {Kind::Corrupted, p};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown heatmap mode '" + text + "'");
  }
};

/// Per-class occupancy of the visibility masks on the coarse grid; each cell
/// holds the fraction of its in-image pixels covered by the class. Classes
/// listed in `class_ids` but absent from the scene get all-zero grids; an
/// empty list means the classes present, in scene order.
inline RawHeatmap ground_truth_heatmap(const GroundTruth& gt, const HeatmapMode& mode = {}, std::uint64_t seed = 0,
                                       std::vector<std::string> class_ids = {}, int scale_factor = 32) {
  if (scale_factor < 1) throw Error(ErrorCode::InvalidArgument, "scale factor must be positive");
  if (class_ids.empty()) {
    for (const auto& o : gt.objects)
      if (std::find(class_ids.begin(), class_ids.end(), o.class_id) == class_ids.end()) class_ids.push_back(o.class_id);
  }
  RawHeatmap h;
  std::tie(h.width, h.height) = heatmap_grid_size(gt.width, gt.height, scale_factor);
  h.scale_factor = scale_factor;
  h.class_ids = class_ids;
  const std::size_t cells = static_cast<std::size_t>(h.width) * h.height;

  std::vector<double> area(cells, 0.0);
  for (int v = 0; v < gt.height; ++v)
    for (int u = 0; u < gt.width; ++u) area[static_cast<std::size_t>(v / scale_factor) * h.width + u / scale_factor] += 1;

  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    std::vector<double> g(cells, 0.0);
    for (const auto& o : gt.objects) {
      if (o.class_id != class_ids[c]) continue;
      for (int v = 0; v < gt.height; ++v)
        for (int u = 0; u < gt.width; ++u)
          if (o.mask[static_cast<std::size_t>(v) * gt.width + u]) {
            g[static_cast<std::size_t>(v / scale_factor) * h.width + u / scale_factor] += 1;
          }
    }
    for (std::size_t i = 0; i < cells; ++i) g[i] /= area[i];

    if (mode.kind == HeatmapMode::Kind::Blurred) {
      std::vector<double> b(cells, 0.0);
      for (int j = 0; j < h.height; ++j)
        for (int i = 0; i < h.width; ++i) {
          double sum = 0.0;
          for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
              const int x = i + di, y = j + dj;
              if (x >= 0 && y >= 0 && x < h.width && y < h.height) sum += g[static_cast<std::size_t>(y) * h.width + x];
            }
          b[static_cast<std::size_t>(j) * h.width + i] = sum / 9.0;
        }
      g = std::move(b);
    } else if (mode.kind == HeatmapMode::Kind::Corrupted) {
      const auto count = static_cast<std::size_t>(std::llround(mode.fraction * static_cast<double>(cells)));
      Rng rng(stream_seed(seed, 1000 + c));
      std::vector<std::size_t> order(cells);
      for (std::size_t i = 0; i < cells; ++i) order[i] = i;
      for (std::size_t k = 0; k < count; ++k) {
        std::swap(order[k], order[k + rng.below(cells - k)]);
        g[order[k]] = rng.uniform();
      }
    }
    h.grids.push_back(std::move(g));
  }
  return h;
}

/// Run-length encoding of a row-major binary mask; runs alternate starting
/// with zeros (the first run may be empty).
inline std::vector<std::uint32_t> encode_mask_rle(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (auto m : mask) {
    const std::uint8_t bit = m ? 1 : 0;
    if (bit != current) {
      counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

inline std::vector<std::uint8_t> decode_mask_rle(const std::vector<std::uint32_t>& counts, std::size_t size) {
  std::vector<std::uint8_t> mask;
  mask.reserve(size);
  std::uint8_t bit = 0;
  for (auto c : counts) {
    if (mask.size() + c > size) throw Error(ErrorCode::IoError, "mask runs exceed the image size");
    mask.insert(mask.end(), c, bit);
    bit ^= 1;
  }
  if (mask.size() != size) throw Error(ErrorCode::IoError, "mask runs do not cover the image");
  return mask;
}

inline nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : gt.objects) {
    nlohmann::json j = {{"class_id", o.class_id},
                        {"quaternion", quaternion_to_json(o.pose.rotation())},
                        {"translation", vector_to_json(o.pose.translation())},
                        {"visible_pixels", o.visible_pixels},
                        {"mask", {{"size", {gt.height, gt.width}}, {"counts", encode_mask_rle(o.mask)}}}};
    j["bbox"] = o.bbox.empty() ? nlohmann::json(nullptr)
                               : nlohmann::json{o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max};
    objects.push_back(std::move(j));
  }
  return {{"width", gt.width}, {"height", gt.height}, {"objects", objects}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  try {
    gt.width = j.at("width").get<int>();
    gt.height = j.at("height").get<int>();
    if (gt.width <= 0 || gt.height <= 0) throw Error(ErrorCode::IoError, "ground truth needs a positive image size");
    const std::size_t size = static_cast<std::size_t>(gt.width) * gt.height;
    for (const auto& jo : j.at("objects")) {
      GroundTruthObject o;
      o.class_id = jo.at("class_id").get<std::string>();
      o.pose = transform_from_json(jo);
      o.mask = decode_mask_rle(jo.at("mask").at("counts").get<std::vector<std::uint32_t>>(), size);
      o.visible_pixels = static_cast<std::size_t>(std::count(o.mask.begin(), o.mask.end(), 1));
      const auto& b = jo.at("bbox");
      if (!b.is_null()) o.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      gt.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad ground-truth document: ") + e.what());
  }
  return gt;
}

/// Path prefix "<dir>/NNNN_" of scene `index`.
inline std::filesystem::path scene_prefix(const std::filesystem::path& dir, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu_", index);
  return dir / buf;
}

struct SceneFiles {
  std::filesystem::path depth, intrinsics, heatmap, truth;
};

inline SceneFiles scene_files(const std::filesystem::path& dir, std::size_t index) {
  const std::string p = scene_prefix(dir, index).string();
  return {p + "depth.png", p + "intrinsics.json", p + "heatmap.fhm", p + "gt.json"};
}

inline void write_scene(const std::filesystem::path& dir, std::size_t index, const SimulatedScene& scene,
                        const CameraIntrinsics& k, const RawHeatmap& heatmap) {
  const auto f = scene_files(dir, index);
  write_depth_png(f.depth, scene.depth);
  write_intrinsics(f.intrinsics, k);
  save_heatmap(heatmap, f.heatmap);
  write_json(f.truth, ground_truth_to_json(scene.truth));
}

inline GroundTruth read_ground_truth(const std::filesystem::path& path) { return ground_truth_from_json(read_json(path)); }

}  // namespace stocs
