#include "hiermesh/articulation.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "hiermesh/error.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh {

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_identity() const {
  return rotation == Eigen::Matrix3d::Identity() && translation == Eigen::Vector3d::Zero();
}

RigidTransform joint_transform(const Joint& joint, double t) {
  validate_joint(joint);
  RigidTransform out;
  if (!joint.exists || t == 0.0) return out;
  switch (joint.type) {
    case JointType::kFixed:
      break;
    case JointType::kRevolute: {
      out.rotation = Eigen::AngleAxisd(t * joint.range, joint.orientation).toRotationMatrix();
      out.translation = joint.location - out.rotation * joint.location;
      break;
    }
    case JointType::kPrismatic:
      out.translation = t * joint.range * joint.orientation;
      break;
  }
  return out;
}

IndexedMesh apply_transform(const IndexedMesh& mesh, const RigidTransform& transform) {
  if (transform.is_identity()) return mesh;
  IndexedMesh out = mesh;
  for (Point3& v : out.vertices) v = transform.apply(v);
  return out;
}

Aabb apply_transform(const Aabb& box, const RigidTransform& transform) {
  Aabb out{Point3::Constant(std::numeric_limits<double>::infinity()),
           Point3::Constant(-std::numeric_limits<double>::infinity())};
  for (int corner = 0; corner < 8; ++corner) {
    const Point3 p((corner & 1) ? box.max.x() : box.min.x(), (corner & 2) ? box.max.y() : box.min.y(),
                   (corner & 4) ? box.max.z() : box.min.z());
    const Point3 q = transform.apply(p);
    out.min = out.min.cwiseMin(q);
    out.max = out.max.cwiseMax(q);
  }
  return out;
}

namespace {

void check_state(const ObjectRecord& record, const ArticulationState& state) {
  HIERMESH_CHECK(state.t.size() == record.parts.size(), ErrorKind::kValidation,
                 "articulation state has " + std::to_string(state.t.size()) + " entries for " +
                     std::to_string(record.parts.size()) + " parts");
}

}  // namespace

std::vector<IndexedMesh> articulate_object(const ObjectRecord& record, const ArticulationState& state) {
  check_state(record, state);
  std::vector<IndexedMesh> out;
  out.reserve(record.parts.size());
  for (std::size_t i = 0; i < record.parts.size(); ++i) {
    const PartRecord& part = record.parts[i];
    out.push_back(apply_transform(part.mesh, joint_transform(part.joint, state.t[i])));
  }
  return out;
}

std::vector<IndexedMesh> articulate_boxes(const ObjectRecord& record, const ArticulationState& state) {
  check_state(record, state);
  std::vector<IndexedMesh> out;
  out.reserve(record.parts.size());
  for (std::size_t i = 0; i < record.parts.size(); ++i) {
    const PartRecord& part = record.parts[i];
    out.push_back(apply_transform(aabb_to_triangles(part.aabb), joint_transform(part.joint, state.t[i])));
  }
  return out;
}

std::vector<ArticulationState> instantiation_states(int n, int part_count) {
  HIERMESH_CHECK(n >= 2, ErrorKind::kValidation, "need at least two articulation states");
  std::vector<ArticulationState> states;
  states.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n - 1);
    states.push_back({std::vector<double>(static_cast<std::size_t>(part_count), t)});
  }
  return states;
}

Joint canonicalize_joint(const Joint& joint, const Point3& object_origin) {
  Joint out = joint;
  if (joint.type == JointType::kPrismatic) out.location = object_origin;
  return out;
}

std::array<Joint, 4> joint_hypotheses(const Aabb& box) {
  const Point3 extent = box.extent();
  HIERMESH_CHECK((extent.array() > 0.0).all(), ErrorKind::kDegenerateInput,
                 "joint hypotheses need a non-degenerate box");
  const double z = 0.5 * (box.min.z() + box.max.z());
  std::array<Joint, 4> out;
  const std::array<Point3, 4> edges = {Point3(box.min.x(), box.min.y(), z), Point3(box.max.x(), box.min.y(), z),
                                       Point3(box.min.x(), box.max.y(), z), Point3(box.max.x(), box.max.y(), z)};
  for (std::size_t k = 0; k < 4; ++k) {
    out[k].type = JointType::kRevolute;
    out[k].exists = true;
    out[k].orientation = Point3::UnitZ();
    out[k].location = edges[k];
    out[k].range = kRevoluteRange;
  }
  return out;
}

double prismatic_range(const std::vector<Aabb>& aabbs, const std::vector<Joint>& joints,
                       const Point3& orientation) {
  HIERMESH_CHECK(!aabbs.empty() && aabbs.size() == joints.size(), ErrorKind::kValidation,
                 "prismatic range needs one joint per box");
  int body = -1;
  double best = -1.0;
  for (std::size_t i = 0; i < aabbs.size(); ++i) {
    if (joints[i].exists && joints[i].type != JointType::kFixed) continue;
    const double volume = aabbs[i].extent().prod();
    if (volume > best) {
      best = volume;
      body = static_cast<int>(i);
    }
  }
  Aabb reference = aabbs.front();
  if (body >= 0) {
    reference = aabbs[static_cast<std::size_t>(body)];
  } else {
    for (const Aabb& b : aabbs) reference = reference.merged(b);
  }
  const double extent = orientation.cwiseAbs().dot(reference.extent());
  return std::max(extent, 1.0 / 128.0);
}

}  // namespace hiermesh
