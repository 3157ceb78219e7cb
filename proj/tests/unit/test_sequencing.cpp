#include <doctest.h>

#include <cmath>

#include "hiermesh/dataset.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/sequencing.hpp"
#include "properties.hpp"

using namespace hiermesh;
using hiermesh::testing::PropertyReport;

TEST_CASE("canonical order is idempotent and permutation invariant") {
  const PropertyReport r = hiermesh::testing::sequencing_properties(100, 21);
  INFO(r.first_failure);
  CHECK(r.ok());
  CHECK(r.max_error <= 1.0 / 256.0);
}

TEST_CASE("canonical order on a hand-made mesh") {
  IndexedMesh m;
  m.vertices = {Point3(0, 0, 1), Point3(1, 0, 0), Point3(0, 1, 0), Point3(0, 0, 0)};
  m.faces = {{0, 1, 2}, {3, 2, 1}};
  const auto seq = canonical_face_order(m, 4);
  // Sorted (z, y, x): v3, v1, v2, v0.
  REQUIRE(seq.mesh.vertices.size() == 4);
  CHECK(seq.mesh.vertices[0] == Point3(0, 0, 0));
  CHECK(seq.mesh.vertices[1] == Point3(1, 0, 0));
  CHECK(seq.mesh.vertices[2] == Point3(0, 1, 0));
  CHECK(seq.mesh.vertices[3] == Point3(0, 0, 1));
  // {0,1,2} -> {3,1,2} -> rotated {1,2,3}; {3,2,1} -> {0,2,1}.
  REQUIRE(seq.mesh.faces.size() == 2);
  CHECK(seq.mesh.faces[0] == Face{0, 2, 1});
  CHECK(seq.mesh.faces[1] == Face{1, 2, 3});
  CHECK(seq.owner_part == std::vector<int>{4, 4});
}

TEST_CASE("quantization bins and centers") {
  CHECK(quantize_scalar(0.0) == 0);
  CHECK(quantize_scalar(1.0) == kGridResolution - 1);
  CHECK(quantize_scalar(-0.5) == 0);
  CHECK(quantize_scalar(2.0) == kGridResolution - 1);
  CHECK(quantize_scalar(0.5) == 64);
  CHECK(dequantize_scalar(0) == doctest::Approx(0.5 / 128));
  for (int b = 0; b < kGridResolution; ++b) CHECK(quantize_scalar(dequantize_scalar(b)) == b);
}

TEST_CASE("quantize_mesh welds vertices sharing a bin") {
  IndexedMesh m;
  m.vertices = {Point3(0.1, 0.1, 0.1), Point3(0.9, 0.1, 0.1), Point3(0.1, 0.9, 0.1), Point3(0.1001, 0.1, 0.1)};
  m.faces = {{0, 1, 2}, {3, 1, 0}};
  const IndexedMesh q = quantize_mesh(m);
  CHECK(q.vertices.size() == 3);
  CHECK(q.faces.size() == 1);
  for (const Point3& v : q.vertices) {
    for (int k = 0; k < 3; ++k) CHECK(v[k] == dequantize_scalar(quantize_scalar(v[k])));
  }
}

TEST_CASE("box triangulation properties") {
  const PropertyReport r = hiermesh::testing::box_properties(200, 5);
  INFO(r.first_failure);
  CHECK(r.ok());
}

TEST_CASE("box quads split through their smallest corner") {
  const IndexedMesh m = aabb_to_triangles({Point3(0, 0, 0), Point3(1, 1, 1)});
  // The bottom face (z = 0) uses the diagonal through corner 0 and corner 3.
  int through_origin = 0;
  for (const Face& f : m.faces) {
    bool bottom = true;
    for (int c : f) bottom = bottom && m.vertices[c].z() == 0.0;
    if (bottom) {
      const bool has0 = f[0] == 0 || f[1] == 0 || f[2] == 0;
      const bool has3 = f[0] == 3 || f[1] == 3 || f[2] == 3;
      through_origin += has0 && has3;
    }
  }
  CHECK(through_origin == 2);
  CHECK_THROWS_AS(aabb_to_triangles({Point3(0, 0, 0), Point3(1, 0, 1)}), Error);
}

TEST_CASE("order_parts sorts by min corner in z, y, x and is stable") {
  std::vector<Aabb> boxes{{Point3(0, 0, 0.5), Point3(1, 1, 1)},
                          {Point3(0.5, 0, 0), Point3(1, 1, 1)},
                          {Point3(0.1, 0, 0), Point3(1, 1, 1)},
                          {Point3(0.1, 0, 0), Point3(0.5, 0.5, 0.5)}};
  CHECK(order_parts(boxes) == std::vector<int>{2, 3, 1, 0});
}

TEST_CASE("positional encoding uses octave frequencies") {
  double out[kPositionalPerScalar];
  positional_encoding(0.3, out);
  for (int k = 0; k < kPositionalBands; ++k) {
    const double w = std::ldexp(M_PI, k) * 0.3;
    CHECK(out[2 * k] == doctest::Approx(std::sin(w)));
    CHECK(out[2 * k + 1] == doctest::Approx(std::cos(w)));
  }
}

TEST_CASE("geometry and structure sequences have the documented shapes") {
  const ObjectRecord r = quantize_object(generate_synthetic_object("storage", 3));
  const GeometrySequence g = build_geometry_sequence(r.parts[0]);
  CHECK(g.features.cols() == kGeometricFeatureWidth);
  CHECK(g.features.rows() == static_cast<Eigen::Index>(g.faces.mesh.faces.size()));
  CHECK(g.bins.size() == g.faces.mesh.faces.size());
  for (const FaceBins& b : g.bins) {
    for (int v : b) CHECK((v >= 0 && v < kGridResolution));
  }

  const StructureSequence s = build_structure_sequence(r);
  const auto n = static_cast<Eigen::Index>(r.parts.size());
  CHECK(s.part_count == n);
  CHECK(s.geometric.rows() == n * kFacesPerBox);
  CHECK(s.label.cols() == kLabelFeatureDim);
  CHECK(s.geometry.cols() == kGeometryFeatureDim);
  CHECK(s.articulation.cols() == kArticulationFeatureWidth);
  CHECK(s.orientation.rows() == n);
  CHECK(s.joint_type.size() == r.parts.size());
  for (std::size_t i = 0; i < r.parts.size(); ++i) {
    CHECK(s.joint_type[i] == static_cast<int>(r.parts[i].joint.type));
    CHECK(s.exists[i] == (r.parts[i].joint.exists ? 1 : 0));
  }
}
