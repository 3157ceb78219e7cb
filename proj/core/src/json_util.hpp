#pragma once

#include <json.hpp>

#include "hiermesh/record.hpp"

namespace hiermesh::detail {

using nlohmann::json;

json point_to_json(const Point3& p);
Point3 point_from_json(const json& j, const char* field);

json joint_to_json(const Joint& joint);
// Throws ErrorKind::kSchema on missing or mistyped fields.
Joint joint_from_json(const json& j);

json aabb_to_json(const Aabb& box);
Aabb aabb_from_json(const json& j);

// Part metadata as stored in object.json (mesh referenced by file name).
json part_to_json(const PartRecord& part);

}  // namespace hiermesh::detail
