#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hiermesh/articulation.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh::testing {

IndexedMesh random_mesh(Rng& rng, int max_vertices, int max_faces) {
  IndexedMesh m;
  const int nv = rng.uniform_int(3, max_vertices);
  for (int i = 0; i < nv; ++i) m.vertices.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  const int nf = rng.uniform_int(1, max_faces);
  for (int f = 0; f < nf; ++f) {
    Face face;
    do {
      for (int& c : face) c = rng.uniform_int(0, nv - 1);
    } while (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]);
    m.faces.push_back(face);
  }
  return m;
}

IndexedMesh scramble(const IndexedMesh& mesh, Rng& rng) {
  const int nv = static_cast<int>(mesh.vertices.size());
  std::vector<int> perm(static_cast<std::size_t>(nv));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = nv - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  IndexedMesh out;
  out.vertices.resize(mesh.vertices.size());
  for (int i = 0; i < nv; ++i) out.vertices[perm[i]] = mesh.vertices[i];
  for (const Face& f : mesh.faces) {
    const int r = static_cast<int>(rng.below(3));
    out.faces.push_back({perm[f[r]], perm[f[(r + 1) % 3]], perm[f[(r + 2) % 3]]});
  }
  for (int i = static_cast<int>(out.faces.size()) - 1; i > 0; --i) {
    std::swap(out.faces[i], out.faces[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  return out;
}

bool same_mesh(const IndexedMesh& a, const IndexedMesh& b) { return a.vertices == b.vertices && a.faces == b.faces; }

PropertyReport sequencing_properties(int meshes, std::uint64_t seed) {
  PropertyReport report;
  Rng rng(seed);
  for (int i = 0; i < meshes; ++i) {
    ++report.cases;
    const IndexedMesh m = random_mesh(rng);
    const IndexedMesh once = canonical_face_order(m).mesh;
    if (!same_mesh(canonical_face_order(once).mesh, once)) report.fail("mesh " + std::to_string(i) + " not idempotent");
    for (int k = 0; k < 3; ++k) {
      if (!same_mesh(canonical_face_order(scramble(m, rng)).mesh, once)) {
        report.fail("mesh " + std::to_string(i) + " depends on input order");
        break;
      }
    }
    // Canonical order itself: sorted vertices, rotated and sorted faces.
    const bool sorted_vertices = std::is_sorted(once.vertices.begin(), once.vertices.end(), zyx_less);
    const bool led = std::all_of(once.faces.begin(), once.faces.end(),
                                 [](const Face& f) { return f[0] < f[1] && f[0] < f[2]; });
    if (!sorted_vertices || !led || !std::is_sorted(once.faces.begin(), once.faces.end())) {
      report.fail("mesh " + std::to_string(i) + " output not canonical");
    }
    for (const Point3& v : m.vertices) {
      const Point3 back = dequantize(quantize(v));
      const double err = (back - v).cwiseAbs().maxCoeff();
      report.max_error = std::max(report.max_error, err);
      if (err > 1.0 / 256.0) report.fail("quantization error " + std::to_string(err));
    }
  }
  return report;
}

PropertyReport box_properties(int boxes, std::uint64_t seed) {
  PropertyReport report;
  Rng rng(seed);
  for (int i = 0; i < boxes; ++i) {
    ++report.cases;
    Point3 a(rng.uniform(), rng.uniform(), rng.uniform());
    Point3 b(rng.uniform(), rng.uniform(), rng.uniform());
    for (int k = 0; k < 3; ++k) {
      if (std::abs(a[k] - b[k]) < 1e-3) b[k] = a[k] + 1e-3;
    }
    const Aabb box{a.cwiseMin(b), a.cwiseMax(b)};
    const IndexedMesh m = aabb_to_triangles(box);
    std::ostringstream why;
    why << "box " << i << ": ";
    if (m.vertices.size() != 8 || m.faces.size() != 12) {
      report.fail(why.str() + "expected 8 vertices and 12 faces");
      continue;
    }
    // Directed edges: each must appear once and its reverse once.
    std::map<std::pair<int, int>, int> directed;
    for (const Face& f : m.faces) {
      for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
    }
    bool closed = true;
    for (const auto& [edge, n] : directed) {
      const auto rev = directed.find({edge.second, edge.first});
      if (n != 1 || rev == directed.end() || rev->second != 1) closed = false;
    }
    const int edges = static_cast<int>(directed.size()) / 2;
    const int euler = 8 - edges + 12;
    bool outward = true;
    double volume = 0.0;
    for (const Face& f : m.faces) {
      const Point3& p0 = m.vertices[f[0]];
      const Point3& p1 = m.vertices[f[1]];
      const Point3& p2 = m.vertices[f[2]];
      const Point3 n = (p1 - p0).cross(p2 - p0);
      if (n.dot((p0 + p1 + p2) / 3.0 - box.center()) <= 0.0) outward = false;
      volume += p0.dot(p1.cross(p2)) / 6.0;
    }
    const double expected = box.extent().prod();
    bool corners = true;
    for (const Point3& v : m.vertices) {
      for (int k = 0; k < 3; ++k) {
        if (v[k] != box.min[k] && v[k] != box.max[k]) corners = false;
      }
    }
    if (!closed) report.fail(why.str() + "not watertight");
    if (euler != 2) report.fail(why.str() + "Euler characteristic " + std::to_string(euler));
    if (!outward) report.fail(why.str() + "inward normal");
    if (!corners) report.fail(why.str() + "vertex off the box corners");
    report.max_error = std::max(report.max_error, std::abs(volume - expected));
    if (std::abs(volume - expected) > 1e-12) report.fail(why.str() + "enclosed volume mismatch");
  }
  return report;
}

namespace {

Point3 random_unit(Rng& rng) {
  Point3 v;
  do {
    v = Point3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-3);
  return v.normalized();
}

}  // namespace

PropertyReport kinematics_properties(int joints, std::uint64_t seed) {
  PropertyReport report;
  Rng rng(seed);
  for (int i = 0; i < joints; ++i) {
    ++report.cases;
    Joint j;
    j.type = static_cast<JointType>(rng.below(3));
    j.exists = j.type != JointType::kFixed || rng.bernoulli(0.5);
    j.orientation = random_unit(rng);
    j.location = Point3(rng.uniform(), rng.uniform(), rng.uniform());
    j.range = j.type == JointType::kRevolute ? kRevoluteRange : j.type == JointType::kPrismatic ? rng.uniform(0.05, 1.0) : 0.0;
    const std::string tag = "joint " + std::to_string(i) + " (" + std::string(to_string(j.type)) + "): ";

    if (!joint_transform(j, 0.0).is_identity()) report.fail(tag + "t=0 is not the exact identity");

    const double t = rng.uniform(0.0, 1.0);
    const RigidTransform x = joint_transform(j, t);
    const Point3 p(rng.uniform(), rng.uniform(), rng.uniform());
    const Point3 q(rng.uniform(), rng.uniform(), rng.uniform());
    if (!j.exists || j.type == JointType::kFixed) {
      if (!x.is_identity()) report.fail(tag + "static joint moved");
      continue;
    }
    if (j.type == JointType::kPrismatic) {
      const Point3 shift = t * j.range * j.orientation;
      if (x.rotation != Eigen::Matrix3d::Identity() || x.translation != shift) {
        report.fail(tag + "prismatic displacement is not exact");
      }
      const double err = (x.apply(p) - p - shift).cwiseAbs().maxCoeff();
      report.max_error = std::max(report.max_error, err);
      if (err > 4 * std::numeric_limits<double>::epsilon()) report.fail(tag + "prismatic point displacement");
      continue;
    }
    const Eigen::Matrix3d& r = x.rotation;
    const double angle = t * j.range;
    double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    err = std::max(err, std::abs(r.determinant() - 1.0));
    err = std::max(err, std::abs((x.apply(p) - x.apply(q)).norm() - (p - q).norm()));
    err = std::max(err, (x.apply(j.location) - j.location).norm());
    err = std::max(err, (r * j.orientation - j.orientation).norm());
    // Angle and handedness about the axis.
    Point3 u = p - j.location;
    u -= u.dot(j.orientation) * j.orientation;
    if (u.norm() > 1e-3) {
      const Point3 ru = r * u;
      const double n2 = u.squaredNorm();
      err = std::max(err, std::abs(u.dot(ru) - n2 * std::cos(angle)));
      err = std::max(err, std::abs(u.cross(ru).dot(j.orientation) - n2 * std::sin(angle)));
    }
    report.max_error = std::max(report.max_error, err);
    if (err > 1e-9) report.fail(tag + "revolute error " + std::to_string(err));
  }
  return report;
}

}  // namespace hiermesh::testing
