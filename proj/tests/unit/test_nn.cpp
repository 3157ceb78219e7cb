#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "hiermesh/error.hpp"
#include "hiermesh/nn/checkpoint.hpp"
#include "hiermesh/nn/gradcheck.hpp"
#include "hiermesh/nn/layers.hpp"
#include "hiermesh/nn/ops.hpp"
#include "hiermesh/nn/optim.hpp"
#include "suites.hpp"

using namespace hiermesh;
using namespace hiermesh::nn;

TEST_CASE("every layer kind and loss op passes central differences") {
  const auto cases = hiermesh::testing::gradient_suite();
  std::set<std::string> kinds;
  for (const auto& c : cases) {
    INFO(c.name << " coordinates " << c.coordinates);
    CHECK(c.coordinates > 0);
    CHECK(c.max_relative_error < 1e-4);
    kinds.insert(c.name.substr(0, c.name.find(' ')));
  }
  for (LayerKind k : all_layer_kinds()) CHECK(kinds.count(std::string(to_string(k))) == 1);
}

TEST_CASE("condition positions receive exactly zero gradient") {
  const auto r = hiermesh::testing::prefix_mask_check();
  CHECK(r.prefix_rows > 0);
  CHECK(r.max_analytic == 0.0);
  CHECK(r.max_numeric == 0.0);
  CHECK(r.max_target_grad > 0.0);
}

TEST_CASE("relative error definition") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(1.0, 3.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1e-12, 0.0) == doctest::Approx(1e-4));
}

TEST_CASE("cross entropy matches a direct log-sum-exp and ignores masked rows") {
  Tape t;
  Matrix logits(3, 4);
  logits << 1, 2, 3, 4, 1000, 0, -1000, 2, 0, 0, 0, 0;
  const std::vector<int> targets{3, 0, 1};
  auto lse = [&](int r) {
    const double m = logits.row(r).maxCoeff();
    return m + std::log((logits.row(r).array() - m).exp().sum());
  };
  const double row0 = lse(0) - logits(0, 3);
  const double row1 = lse(1) - logits(1, 0);
  Var all = cross_entropy(t.constant(logits), targets, {1, 1, 0});
  CHECK(all.scalar() == doctest::Approx((row0 + row1) / 2));
  CHECK(std::isfinite(all.scalar()));
  const Vector nll = token_nll(logits, targets);
  CHECK(nll(2) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("straight-through passes gradients and stop_gradient blocks them") {
  ParameterStore store;
  Parameter& x = store.add("x", Matrix::Constant(2, 2, 0.3));
  Tape t;
  Var q = t.constant(Matrix::Constant(2, 2, 1.0));
  Var st = straight_through(t.param(x), q);
  CHECK(st.value() == q.value());
  t.backward(sum(add(st, stop_gradient(scale(t.param(x), 5.0)))));
  CHECK(x.grad == Matrix::Ones(2, 2));
}

TEST_CASE("causal attention ignores future rows and packed blocks are isolated") {
  ParameterStore store;
  Rng rng(4);
  MultiHeadAttention att(store, "att", 8, 2, true, rng);
  Matrix x = normal_init(6, 8, 1.0, rng);
  Matrix y = x;
  y.row(5).setConstant(9.0);
  Tape t;
  const Matrix a = att(t, t.constant(x), std::nullopt, {}).value();
  const Matrix b = att(t, t.constant(y), std::nullopt, {}).value();
  CHECK((a.topRows(5) - b.topRows(5)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.row(5) - b.row(5)).cwiseAbs().maxCoeff() > 0.0);

  Matrix z = x;
  z.row(1).setConstant(-4.0);
  const std::vector<AttentionBlock> blocks{{0, 2, 0, 2, true}, {2, 6, 2, 6, true}};
  const Matrix c = att(t, t.constant(x), std::nullopt, blocks).value();
  const Matrix d = att(t, t.constant(z), std::nullopt, blocks).value();
  CHECK((c.bottomRows(4) - d.bottomRows(4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("layer specs are validated") {
  LayerSpec s;
  s.kind = LayerKind::kAttention;
  s.in = 10;
  s.out = 10;
  s.heads = 3;
  CHECK_THROWS_AS(validate(s), Error);
  s.heads = 2;
  CHECK_NOTHROW(validate(s));
  ParameterStore store;
  Rng rng(1);
  Linear lin(store, "lin", 4, 3, rng);
  Tape t;
  CHECK_THROWS_AS(lin(t, t.constant(Matrix::Zero(2, 5))), Error);
}

TEST_CASE("adam first steps match the closed form") {
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Constant(1, 1, 2.0));
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam adam(store, cfg);
  double m = 0, v = 0, value = 2.0;
  for (int step = 1; step <= 5; ++step) {
    const double g = 2 * value;  // d/dw w^2
    w.grad(0, 0) = g;
    adam.step();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, step));
    const double vh = v / (1 - std::pow(0.999, step));
    value -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w.value(0, 0) == doctest::Approx(value).epsilon(1e-12));
    CHECK(w.grad(0, 0) == 0.0);
  }
  CHECK(adam.steps() == 5);
}

TEST_CASE("gradient clipping bounds the update direction norm") {
  ParameterStore store;
  Parameter& a = store.add("a", Matrix::Zero(1, 2));
  a.grad << 30.0, 40.0;
  CHECK(gradient_norm(store) == doctest::Approx(50.0));
  AdamConfig cfg;
  cfg.lr = 1.0;
  cfg.clip_norm = 1.0;
  Adam adam(store, cfg);
  adam.step();
  // Adam's first step is lr * sign regardless of scale.
  CHECK(a.value(0, 0) == doctest::Approx(-1.0));
  CHECK(a.value(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("checkpoint round trip and corruption") {
  ParameterStore store;
  Rng rng(2);
  store.add("w", normal_init(3, 4, 1.0, rng));
  store.add("buf", Matrix::Constant(1, 2, 7.0), false);
  Checkpoint ck;
  ck.metadata = R"({"kind":"test"})";
  add_parameters(ck, store, "m/");
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.metadata == ck.metadata);
  REQUIRE(back.find("m/w") != nullptr);
  CHECK(*back.find("m/w") == store.get("w").value);

  ParameterStore other;
  other.add("w", Matrix::Zero(3, 4));
  other.add("buf", Matrix::Zero(1, 2), false);
  load_parameters(other, back, "m/");
  CHECK(other.get("w").value == store.get("w").value);
  CHECK(other.get("buf").value == store.get("buf").value);

  ParameterStore wrong;
  wrong.add("w", Matrix::Zero(4, 3));
  CHECK_THROWS_AS(load_parameters(wrong, back, "m/"), Error);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(deserialize_checkpoint("XXXX" + bytes.substr(4)), Error);

  const auto path = std::filesystem::temp_directory_path() / "hiermesh_test.ckpt";
  write_checkpoint(path, ck);
  CHECK(read_checkpoint(path).tensors.size() == 2);
  CHECK(file_hash(path).size() == 16);
  std::filesystem::remove(path);
}

TEST_CASE("adam state survives export and import") {
  ParameterStore s1;
  Parameter& w1 = s1.add("w", Matrix::Constant(2, 2, 1.0));
  Adam a1(s1);
  for (int i = 0; i < 3; ++i) {
    w1.grad.setConstant(0.5 * (i + 1));
    a1.step();
  }
  std::vector<NamedTensor> state;
  a1.export_state(state, "opt/");
  ParameterStore s2;
  Parameter& w2 = s2.add("w", w1.value);
  Adam a2(s2);
  a2.import_state(state, "opt/", a1.steps());
  w1.grad.setConstant(-1.0);
  w2.grad.setConstant(-1.0);
  a1.step();
  a2.step();
  CHECK(w1.value == w2.value);
}
