#include "hiermesh/record.hpp"

#include <algorithm>
#include <cmath>

#include "hiermesh/error.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh {

std::string_view to_string(JointType type) {
  switch (type) {
    case JointType::kFixed: return "fixed";
    case JointType::kRevolute: return "revolute";
    case JointType::kPrismatic: return "prismatic";
  }
  return "fixed";
}

JointType joint_type_from_string(std::string_view name) {
  if (name == "fixed") return JointType::kFixed;
  if (name == "revolute") return JointType::kRevolute;
  if (name == "prismatic") return JointType::kPrismatic;
  throw Error(ErrorKind::kSchema, "unknown joint type '" + std::string(name) + "'");
}

std::optional<std::string> joint_violation(const Joint& joint) {
  if (!joint.orientation.allFinite() || !joint.location.allFinite() || !std::isfinite(joint.range)) {
    return "joint fields must be finite";
  }
  if (joint.exists && std::abs(joint.orientation.norm() - 1.0) > kJointAxisTolerance) {
    return "joint orientation must be a unit vector (norm " + std::to_string(joint.orientation.norm()) + ")";
  }
  switch (joint.type) {
    case JointType::kFixed:
      if (joint.range != 0.0) return "fixed joints have range 0";
      break;
    case JointType::kRevolute:
      if (std::abs(joint.range - kRevoluteRange) > 1e-12) return "revolute range must be pi/2";
      break;
    case JointType::kPrismatic:
      if (!(joint.range > 0.0)) return "prismatic range must be positive";
      break;
  }
  return std::nullopt;
}

void validate_joint(const Joint& joint) {
  if (auto why = joint_violation(joint)) throw Error(ErrorKind::kValidation, *why);
}

const std::vector<std::string>& label_set() {
  static const std::vector<std::string> labels = {"arm",  "back", "base",  "door", "drawer", "frame",
                                                  "leg",  "seat", "shelf", "top",  "wheel"};
  return labels;
}

bool is_known_label(std::string_view label) {
  const auto& labels = label_set();
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

const std::vector<std::string>& category_set() {
  static const std::vector<std::string> categories = {"chair", "storage", "table"};
  return categories;
}

std::vector<Aabb> part_aabbs(const ObjectRecord& record) {
  std::vector<Aabb> out;
  out.reserve(record.parts.size());
  for (const PartRecord& p : record.parts) out.push_back(p.aabb);
  return out;
}

std::vector<IndexedMesh> part_meshes(const ObjectRecord& record) {
  std::vector<IndexedMesh> out;
  out.reserve(record.parts.size());
  for (const PartRecord& p : record.parts) out.push_back(p.mesh);
  return out;
}

IndexedMesh union_mesh(const ObjectRecord& record) {
  const auto meshes = part_meshes(record);
  return concatenate(meshes);
}

void validate_object(const ObjectRecord& record, double tolerance) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kValidation, "object '" + record.object_id + "': " + what);
  };
  if (record.parts.empty()) fail("object has no parts");
  const auto& cats = category_set();
  if (std::find(cats.begin(), cats.end(), record.category) == cats.end()) {
    fail("unknown category '" + record.category + "'");
  }
  for (std::size_t i = 0; i < record.parts.size(); ++i) {
    const PartRecord& part = record.parts[i];
    const std::string where = "part " + std::to_string(part.part_id) + ": ";
    if (!is_known_label(part.label)) fail(where + "unknown label '" + part.label + "'");
    if (part.mesh.faces.empty()) fail(where + "mesh has no faces");
    try {
      validate_mesh(part.mesh);
    } catch (const Error& e) {
      fail(where + e.what());
    }
    if (auto why = joint_violation(part.joint)) fail(where + *why);
    const Aabb box = compute_aabb(part.mesh);
    if ((box.min - part.aabb.min).cwiseAbs().maxCoeff() > tolerance ||
        (box.max - part.aabb.max).cwiseAbs().maxCoeff() > tolerance) {
      fail(where + "stored AABB does not match mesh bounds");
    }
    if ((box.min.array() < -tolerance).any() || (box.max.array() > 1.0 + tolerance).any()) {
      fail(where + "mesh leaves the normalized unit cube");
    }
    if (part.geometry_feature && part.geometry_feature->size() != kGeometryFeatureDim) {
      fail(where + "geometry feature must have 128 entries");
    }
  }
  const auto order = order_parts(part_aabbs(record));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] != static_cast<int>(i)) fail("parts are not in canonical bottom-up order");
  }
}

}  // namespace hiermesh
