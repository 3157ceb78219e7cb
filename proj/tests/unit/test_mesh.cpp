#include <doctest.h>

#include <cmath>

#include "hiermesh/error.hpp"
#include "hiermesh/mesh.hpp"
#include "hiermesh/rng.hpp"
#include "hiermesh/sequencing.hpp"

using namespace hiermesh;

namespace {

IndexedMesh unit_triangle() {
  IndexedMesh m;
  m.vertices = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  return m;
}

// Dense barycentric sampling as a distance oracle.
double sampled_distance(const Point3& p, const Point3& a, const Point3& b, const Point3& c) {
  double best = 1e300;
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double u = double(i) / n;
      const double v = double(j) / n;
      best = std::min(best, (p - (a + u * (b - a) + v * (c - a))).norm());
    }
  }
  return best;
}

}  // namespace

TEST_CASE("validate_mesh rejects bad indices and repeated corners") {
  IndexedMesh m = unit_triangle();
  CHECK_NOTHROW(validate_mesh(m));
  m.faces = {{0, 1, 3}};
  CHECK_THROWS_AS(validate_mesh(m), Error);
  m.faces = {{0, 1, 1}};
  try {
    validate_mesh(m);
    FAIL("expected a structural error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kStructural);
  }
}

TEST_CASE("normalization maps the joint box into the unit cube") {
  IndexedMesh a = unit_triangle();
  IndexedMesh b = unit_triangle();
  for (auto& v : b.vertices) v = v * 3.0 + Point3(5, -2, 7);
  const std::vector<IndexedMesh> meshes{a, b};
  const auto n = normalize_object(meshes);
  const Aabb box = compute_aabb(std::span<const IndexedMesh>(n.meshes));
  CHECK(box.extent().maxCoeff() == doctest::Approx(kNormalizedLongestSide));
  CHECK((box.center() - Point3(0.5, 0.5, 0.5)).norm() < 1e-12);
  for (std::size_t i = 0; i < b.vertices.size(); ++i) {
    CHECK((n.transform.apply(b.vertices[i]) - n.meshes[1].vertices[i]).norm() < 1e-12);
    CHECK((n.transform.invert(n.meshes[1].vertices[i]) - b.vertices[i]).norm() < 1e-12);
  }
}

TEST_CASE("merge_close_vertices welds within epsilon and drops collapsed faces") {
  IndexedMesh m;
  m.vertices = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(1e-4, 0, 0)};
  m.faces = {{0, 1, 2}, {0, 3, 2}};
  const IndexedMesh merged = merge_close_vertices(m, 1e-3);
  CHECK(merged.vertices.size() == 3);
  CHECK(merged.faces.size() == 1);
  CHECK_NOTHROW(validate_mesh(merged));
}

TEST_CASE("face adjacency of a box: every face has three edge neighbours") {
  const IndexedMesh box = aabb_to_triangles({Point3(0, 0, 0), Point3(1, 2, 3)});
  const auto adj = face_adjacency(box);
  REQUIRE(adj.size() == 12);
  for (const auto& list : adj) {
    CHECK(list.size() == 3);
    CHECK(std::is_sorted(list.begin(), list.end()));
  }
}

TEST_CASE("point_triangle_distance matches a dense sampling oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Point3 a(rng.normal(), rng.normal(), rng.normal());
    const Point3 b(rng.normal(), rng.normal(), rng.normal());
    const Point3 c(rng.normal(), rng.normal(), rng.normal());
    const Point3 p(2 * rng.normal(), 2 * rng.normal(), 2 * rng.normal());
    const double exact = point_triangle_distance(p, a, b, c);
    const double sampled = sampled_distance(p, a, b, c);
    CHECK(exact <= sampled + 1e-12);
    CHECK(sampled - exact < 0.02 * ((b - a).norm() + (c - a).norm()));
  }
}

TEST_CASE("areas, angles and normals of a right triangle") {
  const Point3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK(face_area(a, b, c) == doctest::Approx(0.5));
  const auto ang = face_angles(a, b, c);
  CHECK(ang[0] == doctest::Approx(M_PI / 2));
  CHECK(ang[0] + ang[1] + ang[2] == doctest::Approx(M_PI));
  CHECK((face_normal(a, b, c) - Point3(0, 0, 1)).norm() < 1e-12);
  CHECK(surface_area(aabb_to_triangles({Point3(0, 0, 0), Point3(1, 2, 3)})) == doctest::Approx(22.0));
}

TEST_CASE("surface samples lie on the mesh and are seed-deterministic") {
  const IndexedMesh box = aabb_to_triangles({Point3(0.1, 0.2, 0.3), Point3(0.4, 0.6, 0.9)});
  const auto s1 = sample_surface_points(box, 500, 3);
  const auto s2 = sample_surface_points(box, 500, 3);
  REQUIRE(s1.count() == 500);
  for (std::size_t i = 0; i < s1.count(); ++i) {
    CHECK(s1.points[i] == s2.points[i]);
    double best = 1e9;
    for (const Face& f : box.faces) {
      best = std::min(best, point_triangle_distance(s1.points[i], box.vertices[f[0]], box.vertices[f[1]],
                                                    box.vertices[f[2]]));
    }
    CHECK(best < 1e-12);
  }
}

TEST_CASE("aabb helpers") {
  const Aabb box{Point3(0, 0, 0), Point3(1, 1, 1)};
  CHECK(box.contains(Point3(1, 1, 1)));
  CHECK_FALSE(box.contains(Point3(1.01, 0.5, 0.5)));
  CHECK(box.contains(Point3(1.01, 0.5, 0.5), 0.02));
  const Aabb m = box.merged({Point3(-1, 0.5, 0.5), Point3(0, 2, 0.5)});
  CHECK(m.min == Point3(-1, 0, 0));
  CHECK(m.max == Point3(1, 2, 1));
}
