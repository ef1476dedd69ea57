#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "stocs/error.hpp"
#include "stocs/geometry.hpp"

namespace stocs {

/// Quaternion as [w, x, y, z].
inline nlohmann::json quaternion_to_json(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

inline nlohmann::json vector_to_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

/// Reads "quaternion" and "translation" from `j`. Throws IoError on a
/// missing or malformed field.
inline RigidTransform transform_from_json(const nlohmann::json& j) {
  try {
    const auto& q = j.at("quaternion");
    const auto& t = j.at("translation");
    if (!q.is_array() || q.size() != 4 || !t.is_array() || t.size() != 3) {
      throw Error(ErrorCode::IoError, "quaternion needs 4 and translation 3 numbers");
    }
    const Eigen::Quaterniond rot(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
    if (!(rot.norm() > 0.5)) throw Error(ErrorCode::IoError, "quaternion is not close to unit length");
    return {rot, Point3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>())};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad pose document: ") + e.what());
  }
}

struct PoseRecord {
  std::string class_id;
  RigidTransform transform;
  double score = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

inline nlohmann::json pose_to_json(const PoseRecord& p) {
  return {{"class_id", p.class_id},
          {"quaternion", quaternion_to_json(p.transform.rotation())},
          {"translation", vector_to_json(p.transform.translation())},
          {"score", p.score},
          {"trials", p.trials},
          {"seed", p.seed}};
}

inline PoseRecord pose_from_json(const nlohmann::json& j) {
  PoseRecord p;
  try {
    p.class_id = j.at("class_id").get<std::string>();
    p.transform = transform_from_json(j);
    p.score = j.value("score", 0.0);
    p.trials = j.value("trials", std::size_t{0});
    p.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad pose document: ") + e.what());
  }
  return p;
}

}  // namespace stocs
