#include "hiermesh/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "hiermesh/articulation.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/obj_io.hpp"
#include "hiermesh/rng.hpp"
#include "hiermesh/sequencing.hpp"
#include "json_util.hpp"

namespace hiermesh {

namespace {

using detail::json;

// ---------------------------------------------------------------------------
// Procedural furniture. Raw units are meters, origin at the floor center, z up,
// front facing +y.

struct RawPart {
  std::string label;
  IndexedMesh mesh;
  Joint joint;  // location in raw coordinates
};

IndexedMesh box(const Point3& lo, const Point3& hi) { return aabb_to_triangles({lo, hi}); }

IndexedMesh merge_meshes(std::initializer_list<IndexedMesh> meshes) {
  std::vector<IndexedMesh> list(meshes);
  return concatenate(list);
}

// Prism with `segments` sides around `axis` (0=x, 1=y, 2=z).
IndexedMesh cylinder(const Point3& center, double radius, double half_length, int axis, int segments) {
  IndexedMesh mesh;
  const int u = (axis + 1) % 3;
  const int v = (axis + 2) % 3;
  for (int end = 0; end < 2; ++end) {
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * M_PI * (s + 0.5) / segments;
      Point3 p = center;
      p[axis] += end == 0 ? -half_length : half_length;
      p[u] += radius * std::cos(a);
      p[v] += radius * std::sin(a);
      mesh.vertices.push_back(p);
    }
  }
  for (int s = 0; s < segments; ++s) {
    const int a = s;
    const int b = (s + 1) % segments;
    mesh.faces.push_back({a, b, b + segments});
    mesh.faces.push_back({a, b + segments, a + segments});
  }
  for (int s = 1; s + 1 < segments; ++s) {
    mesh.faces.push_back({0, s + 1, s});
    mesh.faces.push_back({segments, segments + s, segments + s + 1});
  }
  // Orient outward: compare each face normal with the radial direction.
  for (Face& f : mesh.faces) {
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    const Point3 centroid = (a + b + c) / 3.0;
    if ((b - a).cross(c - a).dot(centroid - center) < 0.0) std::swap(f[1], f[2]);
  }
  return mesh;
}

Joint fixed_joint() { return Joint{}; }

Joint revolute_joint(const Point3& axis, const Point3& location) {
  return Joint{JointType::kRevolute, true, axis.normalized(), location, kRevoluteRange};
}

Joint prismatic_joint(const Point3& axis) {
  // Canonicalized to the raw object origin; range filled in after normalization.
  return Joint{JointType::kPrismatic, true, axis.normalized(), Point3::Zero(), 1.0};
}

RawPart drawer_part(double x0, double x1, double y_back, double y_front, double z0, double z1, double t) {
  RawPart part;
  part.label = "drawer";
  part.mesh = merge_meshes({box({x0, y_front, z0}, {x1, y_front + t, z1}),
                            box({x0 + t, y_back, z0 + t}, {x1 - t, y_front, z1 - t})});
  part.joint = prismatic_joint(Point3::UnitY());
  return part;
}

std::vector<RawPart> make_storage(Rng& rng) {
  const double w = rng.uniform(0.6, 1.2);
  const double d = rng.uniform(0.35, 0.6);
  const double h = rng.uniform(0.5, 1.5);
  const double t = 0.025;
  const double gap = 0.005;
  std::vector<RawPart> parts;

  RawPart body;
  body.label = "base";
  body.mesh = merge_meshes({box({-w / 2, -d / 2, 0}, {w / 2, d / 2, t}),
                            box({-w / 2, -d / 2, h - t}, {w / 2, d / 2, h}),
                            box({-w / 2, -d / 2, t}, {-w / 2 + t, d / 2, h - t}),
                            box({w / 2 - t, -d / 2, t}, {w / 2, d / 2, h - t}),
                            box({-w / 2 + t, -d / 2, t}, {w / 2 - t, -d / 2 + t, h - t})});
  body.joint = fixed_joint();
  parts.push_back(std::move(body));

  const double x0 = -w / 2 + t;
  const double x1 = w / 2 - t;
  const double front = d / 2;
  const int layout = rng.uniform_int(0, 2);
  double door_z0 = t;
  if (layout >= 1) {
    const int drawers = layout == 1 ? rng.uniform_int(2, 4) : rng.uniform_int(1, 2);
    const double top = layout == 1 ? h - t : t + (h - 2 * t) * rng.uniform(0.3, 0.5);
    const double step = (top - t) / drawers;
    for (int k = 0; k < drawers; ++k) {
      const double z0 = t + k * step + (k == 0 ? 0.0 : gap);
      parts.push_back(drawer_part(x0, x1, -d / 2 + 2 * t, front, z0, t + (k + 1) * step, t));
    }
    door_z0 = top + gap;
  }
  if (layout != 1) {
    const double z1 = h - t;
    const int shelves = rng.uniform_int(0, layout == 0 ? 3 : 2);
    for (int k = 0; k < shelves; ++k) {
      const double zs = door_z0 + (z1 - door_z0) * (k + 1) / (shelves + 1);
      RawPart shelf;
      shelf.label = "shelf";
      shelf.mesh = box({x0, -d / 2 + t, zs}, {x1, front - t, zs + t});
      shelf.joint = fixed_joint();
      parts.push_back(std::move(shelf));
    }
    const int doors = w < 0.8 ? 1 : 2;
    const double zmid = 0.5 * (door_z0 + z1);
    if (doors == 1) {
      const bool hinge_left = rng.bernoulli(0.5);
      RawPart door;
      door.label = "door";
      door.mesh = box({x0, front, door_z0}, {x1, front + t, z1});
      door.joint = hinge_left ? revolute_joint(Point3::UnitZ(), {x0, front, zmid})
                              : revolute_joint(-Point3::UnitZ(), {x1, front, zmid});
      parts.push_back(std::move(door));
    } else {
      const double xm = 0.5 * (x0 + x1);
      RawPart left;
      left.label = "door";
      left.mesh = box({x0, front, door_z0}, {xm - gap / 2, front + t, z1});
      left.joint = revolute_joint(Point3::UnitZ(), {x0, front, zmid});
      RawPart right;
      right.label = "door";
      right.mesh = box({xm + gap / 2, front, door_z0}, {x1, front + t, z1});
      right.joint = revolute_joint(-Point3::UnitZ(), {x1, front, zmid});
      parts.push_back(std::move(left));
      parts.push_back(std::move(right));
    }
  }
  return parts;
}

IndexedMesh leg_mesh(Rng& rng, bool round, double cx, double cy, double size, double z0, double z1) {
  if (round) return cylinder({cx, cy, 0.5 * (z0 + z1)}, size / 2, 0.5 * (z1 - z0), 2, 6);
  (void)rng;
  return box({cx - size / 2, cy - size / 2, z0}, {cx + size / 2, cy + size / 2, z1});
}

std::vector<RawPart> make_table(Rng& rng) {
  const double w = rng.uniform(0.8, 1.6);
  const double d = rng.uniform(0.5, 0.9);
  const double h = rng.uniform(0.6, 0.8);
  const double tt = rng.uniform(0.03, 0.06);
  const double leg = rng.uniform(0.04, 0.07);
  const double inset = rng.uniform(0.02, 0.08);
  const bool round = rng.bernoulli(0.5);
  const int legs = rng.bernoulli(0.25) ? 3 : 4;
  std::vector<RawPart> parts;

  RawPart top;
  top.label = "top";
  top.mesh = box({-w / 2, -d / 2, h - tt}, {w / 2, d / 2, h});
  top.joint = fixed_joint();
  parts.push_back(std::move(top));

  const double lx = w / 2 - inset - leg / 2;
  const double ly = d / 2 - inset - leg / 2;
  std::vector<std::pair<double, double>> spots;
  if (legs == 4) {
    spots = {{-lx, -ly}, {lx, -ly}, {-lx, ly}, {lx, ly}};
  } else {
    spots = {{-lx, -ly}, {lx, -ly}, {0.0, ly}};
  }
  for (auto [cx, cy] : spots) {
    RawPart part;
    part.label = "leg";
    part.mesh = leg_mesh(rng, round, cx, cy, leg, 0.0, h - tt);
    part.joint = fixed_joint();
    parts.push_back(std::move(part));
  }
  if (rng.bernoulli(0.5)) {
    const double dh = rng.uniform(0.08, 0.14);
    const double dw = 0.5 * w;
    parts.push_back(drawer_part(-dw / 2, dw / 2, -d / 2 + inset + leg, d / 2 - inset - 0.02, h - tt - dh,
                                h - tt, 0.02));
  }
  return parts;
}

std::vector<RawPart> make_chair(Rng& rng) {
  const double w = rng.uniform(0.4, 0.55);
  const double d = rng.uniform(0.4, 0.5);
  const double hs = rng.uniform(0.4, 0.5);
  const double ts = rng.uniform(0.04, 0.08);
  const double tb = rng.uniform(0.03, 0.05);
  const double hb = rng.uniform(0.35, 0.6);
  std::vector<RawPart> parts;

  RawPart seat;
  seat.label = "seat";
  seat.mesh = box({-w / 2, -d / 2, hs - ts}, {w / 2, d / 2, hs});
  seat.joint = fixed_joint();
  parts.push_back(std::move(seat));

  RawPart back;
  back.label = "back";
  back.mesh = box({-w / 2, -d / 2, hs}, {w / 2, -d / 2 + tb, hs + hb});
  back.joint = fixed_joint();
  parts.push_back(std::move(back));

  if (rng.bernoulli(0.5)) {
    const double leg = rng.uniform(0.03, 0.05);
    const bool round = rng.bernoulli(0.5);
    const double lx = w / 2 - leg / 2;
    const double ly = d / 2 - leg / 2;
    for (auto [cx, cy] : std::vector<std::pair<double, double>>{{-lx, -ly}, {lx, -ly}, {-lx, ly}, {lx, ly}}) {
      RawPart part;
      part.label = "leg";
      part.mesh = leg_mesh(rng, round, cx, cy, leg, 0.0, hs - ts);
      part.joint = fixed_joint();
      parts.push_back(std::move(part));
    }
  } else {
    const double wheel_h = rng.uniform(0.05, 0.07);
    const double r = wheel_h / 2;
    const double reach = rng.uniform(0.25, 0.32);
    const double arm = 0.02;
    const double column = rng.uniform(0.025, 0.04);
    RawPart frame;
    frame.label = "frame";
    frame.mesh = merge_meshes({box({-column, -column, wheel_h + 0.03}, {column, column, hs - ts}),
                               box({-reach, -arm, wheel_h}, {reach, arm, wheel_h + 0.03}),
                               box({-arm, -reach, wheel_h}, {arm, reach, wheel_h + 0.03})});
    frame.joint = fixed_joint();
    parts.push_back(std::move(frame));
    // Every wheel shares the canonical forward direction (rolling axis x).
    const double tip = reach - r;
    for (auto [cx, cy] : std::vector<std::pair<double, double>>{{-tip, 0.0}, {tip, 0.0}, {0.0, -tip}, {0.0, tip}}) {
      RawPart wheel;
      wheel.label = "wheel";
      wheel.mesh = cylinder({cx, cy, r}, r, 0.012, 0, 6);
      wheel.joint = revolute_joint(Point3::UnitZ(), {cx, cy, r});
      parts.push_back(std::move(wheel));
    }
  }
  if (rng.bernoulli(0.4)) {
    const double aw = 0.04;
    const double ah = rng.uniform(0.15, 0.25);
    for (int side = 0; side < 2; ++side) {
      RawPart part;
      part.label = "arm";
      part.mesh = side == 0 ? box({-w / 2 - aw, -d / 2, hs - ts}, {-w / 2, d / 2 - 0.05, hs + ah})
                            : box({w / 2, -d / 2, hs - ts}, {w / 2 + aw, d / 2 - 0.05, hs + ah});
      part.joint = fixed_joint();
      parts.push_back(std::move(part));
    }
  }
  return parts;
}

// Normalizes raw parts, resolves joint locations/ranges and sorts bottom-up.
ObjectRecord assemble(std::string category, std::string object_id, std::vector<RawPart> raw) {
  std::vector<IndexedMesh> meshes;
  for (const RawPart& p : raw) meshes.push_back(p.mesh);
  const NormalizedMeshes normalized = normalize_object(meshes);

  std::vector<PartRecord> parts(raw.size());
  std::vector<Aabb> boxes;
  std::vector<Joint> joints;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    parts[i].label = raw[i].label;
    parts[i].mesh = normalized.meshes[i];
    parts[i].aabb = compute_aabb(parts[i].mesh);
    Joint joint = raw[i].joint;
    joint.location = normalized.transform.apply(joint.location);
    if (joint.type == JointType::kFixed) joint.location = parts[i].aabb.center();
    parts[i].joint = joint;
    boxes.push_back(parts[i].aabb);
    joints.push_back(joint);
  }
  for (PartRecord& part : parts) {
    if (part.joint.type == JointType::kPrismatic) {
      part.joint.range = prismatic_range(boxes, joints, part.joint.orientation);
    }
  }

  ObjectRecord record;
  record.category = std::move(category);
  record.object_id = std::move(object_id);
  for (int idx : order_parts(boxes)) record.parts.push_back(parts[idx]);
  for (std::size_t i = 0; i < record.parts.size(); ++i) record.parts[i].part_id = static_cast<int>(i);
  return record;
}

void renumber_canonically(ObjectRecord& record) {
  std::vector<PartRecord> sorted;
  sorted.reserve(record.parts.size());
  for (int idx : order_parts(part_aabbs(record))) sorted.push_back(std::move(record.parts[idx]));
  record.parts = std::move(sorted);
  for (std::size_t i = 0; i < record.parts.size(); ++i) record.parts[i].part_id = static_cast<int>(i);
}

}  // namespace

ObjectRecord generate_synthetic_object(std::string_view category, std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(category)));
  std::vector<RawPart> raw;
  if (category == "storage") {
    raw = make_storage(rng);
  } else if (category == "table") {
    raw = make_table(rng);
  } else if (category == "chair") {
    raw = make_chair(rng);
  } else {
    throw Error(ErrorKind::kConfig, "unknown category '" + std::string(category) + "'");
  }
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%06llu", std::string(category).c_str(), static_cast<unsigned long long>(seed));
  return assemble(std::string(category), id, std::move(raw));
}

std::string object_to_json(const ObjectRecord& record) {
  json root{{"schema_version", kSchemaVersion}, {"object_id", record.object_id}, {"category", record.category}};
  json parts = json::array();
  for (const PartRecord& part : record.parts) parts.push_back(detail::part_to_json(part));
  root["parts"] = std::move(parts);
  return root.dump(2) + '\n';
}

void save_object(const ObjectRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const PartRecord& part : record.parts) {
    save_obj(dir / ("part_" + std::to_string(part.part_id) + ".obj"), part.mesh);
  }
  // object.json is written last and renamed into place.
  const auto tmp = dir / "object.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + tmp.string());
    out << object_to_json(record);
    HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "object.json");
}

ObjectRecord load_object(const std::filesystem::path& dir) {
  const auto path = dir / "object.json";
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "missing " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  auto require = [&](const json& j, const char* field) -> const json& {
    if (!j.is_object() || !j.contains(field)) throw Error(ErrorKind::kSchema, std::string("missing field '") + field + "'");
    return j[field];
  };
  const json& version = require(root, "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw Error(ErrorKind::kSchema, "unsupported schema_version " + version.dump());
  }
  ObjectRecord record;
  try {
    record.object_id = require(root, "object_id").get<std::string>();
    record.category = require(root, "category").get<std::string>();
    const json& parts = require(root, "parts");
    if (!parts.is_array()) throw Error(ErrorKind::kSchema, "parts must be an array");
    for (const json& jp : parts) {
      PartRecord part;
      part.part_id = require(jp, "part_id").get<int>();
      part.label = require(jp, "label").get<std::string>();
      if (!is_known_label(part.label)) throw Error(ErrorKind::kSchema, "unknown label '" + part.label + "'");
      part.joint = detail::joint_from_json(require(jp, "joint"));
      part.aabb = detail::aabb_from_json(require(jp, "aabb"));
      const json& feature = require(jp, "geometry_feature");
      if (!feature.is_null()) {
        auto values = feature.get<std::vector<double>>();
        if (values.size() != kGeometryFeatureDim) throw Error(ErrorKind::kSchema, "geometry_feature must have 128 entries");
        part.geometry_feature = std::move(values);
      }
      part.version = jp.value("version", 0);
      part.mesh = load_obj(dir / require(jp, "mesh").get<std::string>());
      record.parts.push_back(std::move(part));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  validate_object(record);
  return record;
}

std::optional<ObjectRecord> filter_parts(const ObjectRecord& record, int max_faces) {
  for (const PartRecord& part : record.parts) {
    if (static_cast<int>(part.mesh.faces.size()) >= max_faces) return std::nullopt;
  }
  return record;
}

ObjectRecord augment(const ObjectRecord& record, std::uint64_t seed, double shift_range,
                     std::pair<double, double> scale_range) {
  Rng rng(seed);
  Point3 shift;
  Point3 scale;
  for (int k = 0; k < 3; ++k) shift[k] = shift_range > 0.0 ? rng.uniform(-shift_range, shift_range) : 0.0;
  for (int k = 0; k < 3; ++k) scale[k] = rng.uniform(scale_range.first, scale_range.second);
  if (scale_range.first == scale_range.second) scale.setConstant(scale_range.first);

  ObjectRecord out = record;
  if (out.parts.empty()) return out;
  const Point3 center = compute_aabb(part_meshes(record)).center();
  // p * s + (c - c * s + shift) is exact for s = 1, shift = 0.
  const Point3 offset = center - center.cwiseProduct(scale) + shift;
  auto map = [&](const Point3& p) -> Point3 { return p.cwiseProduct(scale) + offset; };

  for (PartRecord& part : out.parts) {
    for (Point3& v : part.mesh.vertices) v = map(v);
    part.aabb = {map(part.aabb.min), map(part.aabb.max)};
    part.joint.location = map(part.joint.location);
    const Point3 scaled = part.joint.orientation.cwiseProduct(scale);
    const double stretch = scaled.norm() / part.joint.orientation.norm();
    if (scaled.norm() > 0.0) part.joint.orientation = scaled.normalized();
    if (part.joint.type == JointType::kPrismatic) part.joint.range *= stretch;
  }

  const Aabb bounds = compute_aabb(part_meshes(out));
  if ((bounds.min.array() < 0.0).any() || (bounds.max.array() > 1.0).any()) {
    const NormalizationTransform t = normalization_for(bounds);
    for (PartRecord& part : out.parts) {
      part.mesh = transform_mesh(part.mesh, t);
      part.aabb = {t.apply(part.aabb.min), t.apply(part.aabb.max)};
      part.joint.location = t.apply(part.joint.location);
      if (part.joint.type == JointType::kPrismatic) part.joint.range *= t.scale;
    }
  }
  for (PartRecord& part : out.parts) part.aabb = compute_aabb(part.mesh);
  return out;
}

ObjectRecord quantize_object(const ObjectRecord& record) {
  ObjectRecord out = record;
  out.parts.clear();
  for (const PartRecord& part : record.parts) {
    PartRecord q = part;
    q.mesh = quantize_mesh(part.mesh);
    if (q.mesh.faces.empty()) continue;
    q.aabb = compute_aabb(q.mesh);
    out.parts.push_back(std::move(q));
  }
  renumber_canonically(out);
  return out;
}

Vector label_embedding(std::string_view label) {
  HIERMESH_CHECK(is_known_label(label), ErrorKind::kConfig, "unknown label '" + std::string(label) + "'");
  static std::mutex mutex;
  static std::map<std::string, Vector, std::less<>> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(label); it != cache.end()) return it->second;
  Rng rng(fnv1a(label));
  Vector v(kLabelFeatureDim);
  for (int k = 0; k < kLabelFeatureDim; ++k) v[k] = rng.normal();
  v.normalize();
  cache.emplace(std::string(label), v);
  return v;
}

LabelTable::LabelTable() : labels_(label_set()) {
  embeddings_.resize(static_cast<Eigen::Index>(labels_.size()), kLabelFeatureDim);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    embeddings_.row(static_cast<Eigen::Index>(i)) = label_embedding(labels_[i]).transpose();
  }
  HIERMESH_CHECK(max_abs_cosine() < 0.3, ErrorKind::kConfig, "label embeddings are not near-orthogonal");
}

const LabelTable& LabelTable::standard() {
  static const LabelTable table;
  return table;
}

double LabelTable::max_abs_cosine() const {
  const Matrix gram = embeddings_ * embeddings_.transpose();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      if (i != j) worst = std::max(worst, std::abs(gram(i, j)));
    }
  }
  return worst;
}

std::vector<std::filesystem::path> list_object_dirs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(root)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "object.json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hiermesh
