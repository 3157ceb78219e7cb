#include <doctest.h>

#include <numeric>

#include "hiermesh/dataset.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/metrics.hpp"
#include "hiermesh/rng.hpp"
#include "hiermesh/sequencing.hpp"
#include "metric_oracles.hpp"

using namespace hiermesh;

TEST_CASE("library metrics equal brute-force oracles on small sets") {
  const auto r = hiermesh::testing::metric_oracles(60, 13);
  INFO(r.first_mismatch);
  CHECK(r.trials == 60);
  CHECK(r.mismatches == 0);
}

TEST_CASE("hand-computed chamfer and set metrics") {
  PointCloud a{{Point3(0, 0, 0), Point3(1, 0, 0)}};
  PointCloud b{{Point3(0, 0, 0)}};
  // a->b: (0 + 1) / 2; b->a: 0.
  CHECK(chamfer(a, b) == doctest::Approx(0.5));
  CHECK(chamfer(a, a) == 0.0);

  Matrix gr(2, 2), gg(2, 2), rr(2, 2);
  gr << 1, 4, 2, 3;
  gg << 0, 5, 5, 0;
  rr << 0, 6, 6, 0;
  const SetMetrics m = set_metrics(gr, gg, rr);
  CHECK(m.mmd == doctest::Approx((1.0 + 3.0) / 2));
  CHECK(m.cov == doctest::Approx(0.5));  // both gens pick ref 0
  // Every shape's nearest neighbour is in the other set.
  CHECK(m.nna == doctest::Approx(0.0));
  CHECK_THROWS_AS(set_metrics(Matrix(0, 2), Matrix(0, 0), rr), Error);
}

TEST_CASE("k-d tree agrees with linear search and prefers low indices") {
  Rng rng(8);
  std::vector<Point3> pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform_int(0, 5), rng.uniform_int(0, 5), rng.uniform_int(0, 5));
  const KdTree tree(pts);
  for (int k = 0; k < 200; ++k) {
    const Point3 q(rng.uniform(-1, 6), rng.uniform(-1, 6), rng.uniform(-1, 6));
    int best = 0;
    for (int i = 1; i < 300; ++i) {
      if ((pts[i] - q).squaredNorm() < (pts[best] - q).squaredNorm()) best = i;
    }
    const auto [idx, dist] = tree.nearest(q);
    CHECK(idx == best);
    CHECK(dist == doctest::Approx((pts[best] - q).norm()));
  }
  CHECK(tree.nearest(pts[17]).first == static_cast<int>(std::find(pts.begin(), pts.end(), pts[17]) - pts.begin()));
}

TEST_CASE("percentiles interpolate between ranks") {
  const std::vector<double> v{4, 1, 3, 2, 5};
  CHECK(percentile(v, 0) == 1.0);
  CHECK(percentile(v, 50) == 3.0);
  CHECK(percentile(v, 100) == 5.0);
  CHECK(percentile(v, 10) == doctest::Approx(1.4));
  CHECK(percentile({7.0}, 90) == 7.0);
  Matrix gt(3, 2);
  gt << 0.5, 0.2, 0.1, 0.9, 0.3, 0.3;
  const NoveltyReport n = novelty_percentiles(gt);
  CHECK(n.distances == std::vector<double>{0.2, 0.1, 0.3});
  CHECK(n.nearest == std::vector<int>{1, 0, 0});
  CHECK(n.p50 == doctest::Approx(0.2));
}

TEST_CASE("roc auc with ties") {
  CHECK(roc_auc({0.1, 0.9}, {0, 1}) == 1.0);
  CHECK(roc_auc({0.9, 0.1}, {0, 1}) == 0.0);
  CHECK(roc_auc({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc({0.5, 0.5}, {1, 1}), Error);
}

TEST_CASE("instantiation distance of an object with itself is zero in every state") {
  CHECK(hiermesh::testing::self_instantiation_distance(3, 10) == 0.0);
  const ObjectRecord a = generate_synthetic_object("storage", 1);
  const ObjectRecord b = generate_synthetic_object("storage", 2);
  InstantiationConfig cfg;
  cfg.points = 512;
  std::vector<double> per_state;
  CHECK(instantiation_distance(a, b, cfg, &per_state) > 0.0);
  CHECK(per_state.size() == 10);
}

TEST_CASE("surface sampling over several meshes is area weighted") {
  const IndexedMesh small = aabb_to_triangles({Point3(0, 0, 0), Point3(0.1, 0.1, 0.1)});
  const IndexedMesh big = aabb_to_triangles({Point3(0.5, 0.5, 0.5), Point3(0.8, 0.8, 0.8)});
  const PointCloud c = sample_surface({small, big}, 5000, 1);
  int in_small = 0;
  for (const Point3& p : c.points) in_small += p.x() <= 0.1 + 1e-12;
  // Area ratio 1 : 9.
  CHECK(in_small / 5000.0 == doctest::Approx(0.1).epsilon(0.25));
}
