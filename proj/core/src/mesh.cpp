#include "hiermesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include "hiermesh/error.hpp"
#include "hiermesh/rng.hpp"

namespace hiermesh {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kStructural: return "structural error";
    case ErrorKind::kDegenerateInput: return "degenerate input";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kSampling: return "sampling failure";
    case ErrorKind::kState: return "state error";
  }
  return "error";
}

bool Aabb::contains(const Point3& p, double dilation) const {
  for (int k = 0; k < 3; ++k) {
    if (p[k] < min[k] - dilation || p[k] > max[k] + dilation) return false;
  }
  return true;
}

Aabb Aabb::dilated(double amount) const {
  return {min.array() - amount, max.array() + amount};
}

Aabb Aabb::merged(const Aabb& other) const {
  return {min.cwiseMin(other.min), max.cwiseMax(other.max)};
}

void validate_mesh(const IndexedMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int idx : face) {
      HIERMESH_CHECK(idx >= 0 && idx < n, ErrorKind::kStructural,
                     "face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                         " but mesh has " + std::to_string(n) + " vertices");
    }
    HIERMESH_CHECK(face[0] != face[1] && face[1] != face[2] && face[0] != face[2],
                   ErrorKind::kStructural, "face " + std::to_string(f) + " repeats a vertex index");
  }
  for (const Point3& v : mesh.vertices) {
    HIERMESH_CHECK(v.allFinite(), ErrorKind::kStructural, "non-finite vertex coordinate");
  }
}

Aabb compute_aabb(const IndexedMesh& mesh) {
  HIERMESH_CHECK(!mesh.vertices.empty(), ErrorKind::kDegenerateInput, "AABB of an empty mesh");
  Aabb box{Point3::Constant(std::numeric_limits<double>::infinity()),
           Point3::Constant(-std::numeric_limits<double>::infinity())};
  auto grow = [&](const Point3& p) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  };
  if (mesh.faces.empty()) {
    for (const Point3& v : mesh.vertices) grow(v);
  } else {
    for (const Face& f : mesh.faces) {
      for (int idx : f) grow(mesh.vertices.at(static_cast<std::size_t>(idx)));
    }
  }
  return box;
}

Aabb compute_aabb(std::span<const IndexedMesh> meshes) {
  HIERMESH_CHECK(!meshes.empty(), ErrorKind::kDegenerateInput, "AABB of an empty mesh list");
  Aabb box = compute_aabb(meshes.front());
  for (std::size_t i = 1; i < meshes.size(); ++i) box = box.merged(compute_aabb(meshes[i]));
  return box;
}

NormalizationTransform normalization_for(const Aabb& bounds) {
  const double longest = bounds.extent().maxCoeff();
  HIERMESH_CHECK(longest > 0.0 && std::isfinite(longest), ErrorKind::kDegenerateInput,
                 "object bounding box is a single point");
  NormalizationTransform t;
  t.scale = kNormalizedLongestSide / longest;
  t.offset = Point3::Constant(0.5) - bounds.center() * t.scale;
  return t;
}

IndexedMesh transform_mesh(const IndexedMesh& mesh, const NormalizationTransform& t) {
  IndexedMesh out = mesh;
  for (Point3& v : out.vertices) v = t.apply(v);
  return out;
}

NormalizedMeshes normalize_object(std::span<const IndexedMesh> meshes) {
  NormalizedMeshes out;
  out.transform = normalization_for(compute_aabb(meshes));
  out.meshes.reserve(meshes.size());
  for (const IndexedMesh& m : meshes) out.meshes.push_back(transform_mesh(m, out.transform));
  return out;
}

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

IndexedMesh merge_close_vertices(const IndexedMesh& mesh, double eps) {
  HIERMESH_CHECK(eps >= 0.0, ErrorKind::kValidation, "merge epsilon must be non-negative");
  const int n = static_cast<int>(mesh.vertices.size());
  std::vector<int> by_x(static_cast<std::size_t>(n));
  std::iota(by_x.begin(), by_x.end(), 0);
  std::sort(by_x.begin(), by_x.end(), [&](int a, int b) {
    return mesh.vertices[static_cast<std::size_t>(a)].x() < mesh.vertices[static_cast<std::size_t>(b)].x();
  });

  DisjointSet sets(n);
  for (std::size_t i = 0; i < by_x.size(); ++i) {
    const Point3& p = mesh.vertices[static_cast<std::size_t>(by_x[i])];
    for (std::size_t j = i + 1; j < by_x.size(); ++j) {
      const Point3& q = mesh.vertices[static_cast<std::size_t>(by_x[j])];
      if (q.x() - p.x() > eps) break;
      if ((p - q).cwiseAbs().maxCoeff() <= eps) sets.unite(by_x[i], by_x[j]);
    }
  }

  // Representative per component: smallest (z, y, x), ties to the lower index.
  std::vector<int> representative(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    const int root = sets.find(v);
    int& rep = representative[static_cast<std::size_t>(root)];
    if (rep < 0 || zyx_less(mesh.vertices[static_cast<std::size_t>(v)], mesh.vertices[static_cast<std::size_t>(rep)])) {
      rep = v;
    }
  }

  IndexedMesh out;
  std::vector<int> new_index(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    const int rep = representative[static_cast<std::size_t>(sets.find(v))];
    if (rep == v) {
      new_index[static_cast<std::size_t>(v)] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(mesh.vertices[static_cast<std::size_t>(v)]);
    }
  }
  for (int v = 0; v < n; ++v) {
    const int rep = representative[static_cast<std::size_t>(sets.find(v))];
    new_index[static_cast<std::size_t>(v)] = new_index[static_cast<std::size_t>(rep)];
  }
  out.faces.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    Face g{new_index[static_cast<std::size_t>(f[0])], new_index[static_cast<std::size_t>(f[1])],
           new_index[static_cast<std::size_t>(f[2])]};
    if (g[0] != g[1] && g[1] != g[2] && g[0] != g[2]) out.faces.push_back(g);
  }
  return out;
}

double face_area(const Point3& a, const Point3& b, const Point3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

Point3 face_normal(const Point3& a, const Point3& b, const Point3& c) {
  const Point3 n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Point3(n / len) : Point3::Zero();
}

std::array<double, 3> face_angles(const Point3& a, const Point3& b, const Point3& c) {
  auto angle = [](const Point3& at, const Point3& p, const Point3& q) {
    const Point3 u = p - at;
    const Point3 v = q - at;
    const double denom = u.norm() * v.norm();
    if (denom <= 0.0) return 0.0;
    return std::acos(std::clamp(u.dot(v) / denom, -1.0, 1.0));
  };
  return {angle(a, b, c), angle(b, c, a), angle(c, a, b)};
}

double surface_area(const IndexedMesh& mesh) {
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += face_area(mesh.vertices[static_cast<std::size_t>(f[0])], mesh.vertices[static_cast<std::size_t>(f[1])],
                       mesh.vertices[static_cast<std::size_t>(f[2])]);
  }
  return total;
}

PointCloud sample_surface_points(const IndexedMesh& mesh, std::size_t n, std::uint64_t seed) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += face_area(mesh.vertices[static_cast<std::size_t>(f[0])], mesh.vertices[static_cast<std::size_t>(f[1])],
                       mesh.vertices[static_cast<std::size_t>(f[2])]);
    cumulative.push_back(total);
  }
  HIERMESH_CHECK(total > 0.0, ErrorKind::kDegenerateInput, "cannot sample a zero-area mesh");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const Face& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Point3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Point3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Point3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return cloud;
}

std::vector<std::vector<int>> face_adjacency(const IndexedMesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    for (int e = 0; e < 3; ++e) {
      const int a = face[static_cast<std::size_t>(e)];
      const int b = face[static_cast<std::size_t>((e + 1) % 3)];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
    }
  }
  std::vector<std::vector<int>> adjacency(mesh.faces.size());
  for (const auto& [edge, faces] : edge_faces) {
    for (int f : faces) {
      for (int g : faces) {
        if (f != g) adjacency[static_cast<std::size_t>(f)].push_back(g);
      }
    }
  }
  for (auto& list : adjacency) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adjacency;
}

IndexedMesh concatenate(std::span<const IndexedMesh> meshes) {
  IndexedMesh out;
  for (const IndexedMesh& m : meshes) {
    const int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const Face& f : m.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return out;
}

double point_triangle_distance(const Point3& p, const Point3& a, const Point3& b, const Point3& c) {
  // Closest point by Voronoi-region classification.
  const Point3 ab = b - a;
  const Point3 ac = c - a;
  const Point3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

  const Point3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }

  const Point3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }

  const double denom = va + vb + vc;
  if (denom == 0.0) {
    // Degenerate triangle: fall back to the nearest edge.
    auto seg = [&](const Point3& s0, const Point3& s1) {
      const Point3 d = s1 - s0;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - s0).dot(d) / len2, 0.0, 1.0) : 0.0;
      return (p - (s0 + t * d)).norm();
    };
    return std::min({seg(a, b), seg(b, c), seg(c, a)});
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return (p - (a + ab * v + ac * w)).norm();
}

}  // namespace hiermesh
