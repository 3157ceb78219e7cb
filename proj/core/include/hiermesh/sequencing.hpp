#pragma once

#include <array>
#include <vector>

#include "hiermesh/matrix.hpp"
#include "hiermesh/mesh.hpp"
#include "hiermesh/record.hpp"

namespace hiermesh {

inline constexpr int kGridResolution = 128;
inline constexpr int kTokensPerFace = 6;
inline constexpr int kFacesPerBox = 12;
inline constexpr int kTokensPerPart = kTokensPerFace * kFacesPerBox;
inline constexpr int kPositionalBands = 8;
inline constexpr int kPositionalPerScalar = 2 * kPositionalBands;
inline constexpr int kPositionalPerVertex = 3 * kPositionalPerScalar;  // 48
// Positional encoding of three vertices, area, three angles, unit normal.
inline constexpr int kGeometricFeatureWidth = 3 * kPositionalPerVertex + 1 + 3 + 3;
// Joint type one-hot, exists flag, orientation, encoded joint location.
inline constexpr int kArticulationFeatureWidth = kJointTypeCount + 1 + 3 + kPositionalPerVertex;

using FaceBins = std::array<int, 9>;

struct OrderedFaceSequence {
  IndexedMesh mesh;             // vertices sorted by (z, y, x); faces in canonical order
  std::vector<int> owner_part;  // per face
};

// Vertices sorted ascending by (z, y, x) (stable), faces rotated so the
// smallest index leads (winding kept) and sorted by their index triples.
OrderedFaceSequence canonical_face_order(const IndexedMesh& mesh, int owner_part = 0);

// Permutation listing parts by ascending (min z, min y, min x); stable.
std::vector<int> order_parts(const std::vector<Aabb>& aabbs);

// Watertight 8-vertex, 12-face box with outward winding. Each quad is split
// along the diagonal through its smallest corner in (z, y, x) order.
IndexedMesh aabb_to_triangles(const Aabb& box);

struct QuantizedCoord {
  std::array<int, 3> bin{};
  bool operator==(const QuantizedCoord&) const = default;
};

int quantize_scalar(double x);
double dequantize_scalar(int bin);
QuantizedCoord quantize(const Point3& p);
Point3 dequantize(const QuantizedCoord& q);
// Snaps every vertex to its bin center, welds identical vertices and drops
// faces that collapse.
IndexedMesh quantize_mesh(const IndexedMesh& mesh);

FaceBins face_bins(const IndexedMesh& mesh, const Face& face);

// sin/cos of 2^k * pi * x for k in [0, 8): 16 values written to out.
void positional_encoding(double x, double* out);

// One row per face: encoded quantized corners, area, interior angles, normal.
Matrix geometric_face_features(const IndexedMesh& mesh);

struct GeometrySequence {
  OrderedFaceSequence faces;
  std::vector<FaceBins> bins;
  Matrix features;  // [F, kGeometricFeatureWidth]
};

GeometrySequence build_geometry_sequence(const IndexedMesh& mesh);
GeometrySequence build_geometry_sequence(const PartRecord& part);

struct StructureSequence {
  int part_count = 0;
  OrderedFaceSequence faces;  // 12 faces per part, parts in record order
  std::vector<FaceBins> bins;
  Matrix geometric;     // [12N, kGeometricFeatureWidth]
  Matrix label;         // [12N, 768]
  Matrix geometry;      // [12N, 128]
  Matrix articulation;  // [12N, kArticulationFeatureWidth]

  // Part-level targets.
  std::vector<int> joint_type;
  std::vector<int> exists;
  std::vector<std::array<int, 3>> joint_location_bins;
  Matrix orientation;       // [N, 3]
  Matrix label_target;      // [N, 768]
  Matrix geometry_target;   // [N, 128]
};

StructureSequence build_structure_sequence(const ObjectRecord& record);

}  // namespace hiermesh
