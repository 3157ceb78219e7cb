#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "hiermesh/record.hpp"

namespace hiermesh {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d matrix() const;
  bool is_identity() const;
};

// One scalar per part in [0, 1].
struct ArticulationState {
  std::vector<double> t;
};

// fixed -> identity; revolute -> rotation by t * range about `orientation`
// through `location` (right-hand rule); prismatic -> translation by
// t * range * orientation. Joints with exists == false are static.
RigidTransform joint_transform(const Joint& joint, double t);

IndexedMesh apply_transform(const IndexedMesh& mesh, const RigidTransform& transform);
Aabb apply_transform(const Aabb& box, const RigidTransform& transform);

std::vector<IndexedMesh> articulate_object(const ObjectRecord& record, const ArticulationState& state);
// Same schedule applied to the parts' resting boxes (triangulated).
std::vector<IndexedMesh> articulate_boxes(const ObjectRecord& record, const ArticulationState& state);

// n evenly spaced states shared by all parts: t_k = k / (n - 1).
std::vector<ArticulationState> instantiation_states(int n, int part_count);

Joint canonicalize_joint(const Joint& joint, const Point3& object_origin);

// Four revolute candidates with vertical axes at the vertical edges of the box,
// mid-height, ordered (min x, min y), (max x, min y), (min x, max y), (max x, max y).
std::array<Joint, 4> joint_hypotheses(const Aabb& part_aabb);

// Prismatic range rule: extent along `orientation` of the body box, where the
// body is the largest-volume part with a fixed joint.
double prismatic_range(const std::vector<Aabb>& aabbs, const std::vector<Joint>& joints,
                       const Point3& orientation);

}  // namespace hiermesh
