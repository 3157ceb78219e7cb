#include "json_util.hpp"

#include <string>

#include "hiermesh/error.hpp"

namespace hiermesh::detail {

json point_to_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point3 point_from_json(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) {
    throw Error(ErrorKind::kSchema, std::string("field '") + field + "' must be an array of 3 numbers");
  }
  Point3 p;
  for (int k = 0; k < 3; ++k) {
    if (!j[field][k].is_number()) throw Error(ErrorKind::kSchema, std::string("field '") + field + "' must be numeric");
    p[k] = j[field][k].get<double>();
  }
  return p;
}

json joint_to_json(const Joint& joint) {
  return json{{"type", std::string(to_string(joint.type))},
              {"exists", joint.exists},
              {"orientation", point_to_json(joint.orientation)},
              {"location", point_to_json(joint.location)},
              {"range", joint.range}};
}

Joint joint_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "joint block must be an object");
  if (!j.contains("type") || !j["type"].is_string()) throw Error(ErrorKind::kSchema, "joint.type missing");
  if (!j.contains("exists") || !j["exists"].is_boolean()) throw Error(ErrorKind::kSchema, "joint.exists missing");
  if (!j.contains("range") || !j["range"].is_number()) throw Error(ErrorKind::kSchema, "joint.range missing");
  Joint joint;
  joint.type = joint_type_from_string(j["type"].get<std::string>());
  joint.exists = j["exists"].get<bool>();
  joint.orientation = point_from_json(j, "orientation");
  joint.location = point_from_json(j, "location");
  joint.range = j["range"].get<double>();
  return joint;
}

json aabb_to_json(const Aabb& box) { return json{{"min", point_to_json(box.min)}, {"max", point_to_json(box.max)}}; }

Aabb aabb_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "aabb block must be an object");
  return {point_from_json(j, "min"), point_from_json(j, "max")};
}

json part_to_json(const PartRecord& part) {
  json j{{"part_id", part.part_id},
         {"label", part.label},
         {"joint", joint_to_json(part.joint)},
         {"aabb", aabb_to_json(part.aabb)},
         {"mesh", "part_" + std::to_string(part.part_id) + ".obj"},
         {"version", part.version}};
  j["geometry_feature"] = part.geometry_feature ? json(*part.geometry_feature) : json(nullptr);
  return j;
}

}  // namespace hiermesh::detail
