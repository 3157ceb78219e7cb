#include <doctest.h>

#include "hiermesh/codec.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/rq.hpp"
#include "suites.hpp"

using namespace hiermesh;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("residual quantization matches a brute-force greedy oracle") {
  Rng rng(3);
  const Matrix z = random_matrix(40, 5, rng);
  Matrix book = random_matrix(16, 5, rng);
  book.row(0).setZero();
  const RqResult r = residual_quantize(z, book, 2);
  REQUIRE(r.depth == 2);
  for (int i = 0; i < z.rows(); ++i) {
    RowVector residual = z.row(i);
    RowVector total = RowVector::Zero(5);
    for (int level = 0; level < 2; ++level) {
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < book.rows(); ++c) {
        const double d = (residual - book.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      CHECK(r.code(i, level) == best);
      residual -= book.row(best);
      total += book.row(best);
      CHECK(r.residual_norms(i, level) == doctest::Approx(residual.norm()));
    }
    CHECK((r.quantized.row(i) - total).norm() < 1e-12);
    CHECK(r.residual_norms(i, 1) <= r.residual_norms(i, 0));
  }
  CHECK(nearest_codes(book, book) == [] {
    std::vector<int> v(16);
    for (int i = 0; i < 16; ++i) v[i] = i;
    return v;
  }());
}

TEST_CASE("ties go to the lowest code index") {
  Matrix book(3, 1);
  book << 0.0, 1.0, -1.0;
  Matrix z(1, 1);
  z << 0.5;
  // |0.5 - 0| == |0.5 - 1|.
  CHECK(nearest_codes(z, book) == std::vector<int>{0});
}

TEST_CASE("codebook pins code zero and seeds from the first batch") {
  nn::ParameterStore store;
  CodebookConfig cfg;
  cfg.size = 8;
  cfg.dim = 3;
  Codebook book(store, "cb", cfg);
  CHECK_FALSE(book.initialized());
  Rng rng(1);
  const Matrix z = random_matrix(20, 3, rng);
  RqResult r = book.quantize(z, 2);
  book.update(r, rng);
  CHECK(book.initialized());
  CHECK(book.entries().row(0).norm() == 0.0);
  int distinct = 0;
  for (int c = 1; c < 8; ++c) distinct += book.entries().row(c).norm() > 0.0;
  CHECK(distinct == 7);
  for (int step = 0; step < 20; ++step) {
    r = book.quantize(z, 2);
    book.update(r, rng);
    CHECK(book.entries().row(0).norm() == 0.0);
  }
  r = book.quantize(z, 2);
  const Matrix sums = book.lookup_sum(r.codes, 2);
  CHECK((sums - r.quantized).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("token helpers check lengths") {
  CHECK_THROWS_AS(check_token_length({1, 2, 3}, 6, "geometry"), Error);
  CHECK_THROWS_AS(check_token_length({}, 6, "geometry"), Error);
  CHECK_NOTHROW(check_token_length(std::vector<int>(12, 0), 6, "geometry"));
  Matrix logits(2, 3);
  logits << 0, 5, 1, 2, 2, 0;
  CHECK(argmax_rows(logits) == std::vector<int>{1, 0});
  CHECK(argmax_accuracy(logits, {1, 1}) == doctest::Approx(0.5));
}

TEST_CASE("depth-2 residuals never exceed depth-1 during codec training") {
  const auto r = hiermesh::testing::rq_property(10);
  CHECK(r.batches == 10);
  CHECK(r.faces > 0);
  CHECK(r.violations == 0);
  CHECK(r.max_ratio <= 1.0);
}
