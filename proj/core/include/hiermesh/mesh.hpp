#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hiermesh {

// Normalized object units; z is the vertical axis.
using Point3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

struct IndexedMesh {
  std::vector<Point3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
};

struct Aabb {
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();

  Point3 center() const { return 0.5 * (min + max); }
  Point3 extent() const { return max - min; }
  bool contains(const Point3& p, double dilation = 0.0) const;
  Aabb dilated(double amount) const;
  Aabb merged(const Aabb& other) const;
};

struct PointCloud {
  std::vector<Point3> points;

  std::size_t count() const { return points.size(); }
};

// Uniform similarity mapping p -> p * scale + offset.
struct NormalizationTransform {
  double scale = 1.0;
  Point3 offset = Point3::Zero();

  Point3 apply(const Point3& p) const { return p * scale + offset; }
  Point3 invert(const Point3& p) const { return (p - offset) / scale; }
};

struct NormalizedMeshes {
  std::vector<IndexedMesh> meshes;
  NormalizationTransform transform;
};

inline constexpr double kNormalizedLongestSide = 0.95;
inline constexpr double kDefaultMergeEpsilon = 0.5 / 128.0;

// Throws ErrorKind::kStructural when an index is out of range or a face repeats
// an index.
void validate_mesh(const IndexedMesh& mesh);

Aabb compute_aabb(const IndexedMesh& mesh);
Aabb compute_aabb(std::span<const IndexedMesh> meshes);

// Maps the joint AABB of all meshes into [0,1]^3 with longest side 0.95,
// centered at (0.5, 0.5, 0.5).
NormalizationTransform normalization_for(const Aabb& joint_bounds);
NormalizedMeshes normalize_object(std::span<const IndexedMesh> meshes);
IndexedMesh transform_mesh(const IndexedMesh& mesh, const NormalizationTransform& t);

// Collapses vertices whose max-norm distance is within eps (transitively) onto
// the member with the smallest (z, y, x); drops faces that become degenerate.
IndexedMesh merge_close_vertices(const IndexedMesh& mesh, double eps = kDefaultMergeEpsilon);

PointCloud sample_surface_points(const IndexedMesh& mesh, std::size_t n, std::uint64_t seed);

// faces adjacent iff they share an undirected edge; each list sorted ascending.
std::vector<std::vector<int>> face_adjacency(const IndexedMesh& mesh);

// Concatenates meshes, offsetting indices.
IndexedMesh concatenate(std::span<const IndexedMesh> meshes);

double face_area(const Point3& a, const Point3& b, const Point3& c);
Point3 face_normal(const Point3& a, const Point3& b, const Point3& c);
// Interior angles at a, b, c.
std::array<double, 3> face_angles(const Point3& a, const Point3& b, const Point3& c);
double surface_area(const IndexedMesh& mesh);

// Exact Euclidean distance from p to triangle abc.
double point_triangle_distance(const Point3& p, const Point3& a, const Point3& b, const Point3& c);

// Lexicographic (z, y, x) comparison used by every canonical ordering.
inline bool zyx_less(const Point3& a, const Point3& b) {
  if (a.z() != b.z()) return a.z() < b.z();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.x() < b.x();
}

}  // namespace hiermesh
