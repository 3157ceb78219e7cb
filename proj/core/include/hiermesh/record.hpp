#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiermesh/mesh.hpp"

namespace hiermesh {

enum class JointType { kFixed = 0, kRevolute = 1, kPrismatic = 2 };

inline constexpr int kJointTypeCount = 3;
inline constexpr double kRevoluteRange = 1.5707963267948966;  // 90 degrees
inline constexpr double kJointAxisTolerance = 1e-6;

std::string_view to_string(JointType type);
JointType joint_type_from_string(std::string_view name);

struct Joint {
  JointType type = JointType::kFixed;
  bool exists = false;
  Point3 orientation = Point3::UnitZ();
  Point3 location = Point3::Zero();
  // Radians for revolute joints, normalized length for prismatic joints.
  double range = 0.0;

  bool operator==(const Joint&) const = default;
};

// Returns a description of the first violated Joint invariant, if any.
std::optional<std::string> joint_violation(const Joint& joint);
void validate_joint(const Joint& joint);

inline constexpr int kGeometryFeatureDim = 128;
inline constexpr int kLabelFeatureDim = 768;

struct PartRecord {
  int part_id = 0;
  IndexedMesh mesh;
  std::string label;
  Joint joint;
  Aabb aabb;  // resting state
  std::optional<std::vector<double>> geometry_feature;
  int version = 0;  // bumped on every annotation write
};

struct ObjectRecord {
  std::string object_id;
  std::string category;
  std::vector<PartRecord> parts;
};

// Fixed part label set, alphabetical.
const std::vector<std::string>& label_set();
bool is_known_label(std::string_view label);
const std::vector<std::string>& category_set();

// Throws ErrorKind::kValidation describing the first violated ObjectRecord
// invariant (at least one part, AABBs match meshes, canonical part order,
// joints valid, coordinates inside [0,1]^3).
void validate_object(const ObjectRecord& record, double tolerance = 1e-6);

std::vector<Aabb> part_aabbs(const ObjectRecord& record);
std::vector<IndexedMesh> part_meshes(const ObjectRecord& record);
IndexedMesh union_mesh(const ObjectRecord& record);

}  // namespace hiermesh
