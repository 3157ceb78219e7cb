#include <benchmark/benchmark.h>

#include "hiermesh/dataset.hpp"
#include "hiermesh/metrics.hpp"
#include "hiermesh/rq.hpp"
#include "hiermesh/sequencing.hpp"
#include "hiermesh/transformer.hpp"

using namespace hiermesh;

namespace {

void BM_CanonicalFaceOrder(benchmark::State& state) {
  const ObjectRecord r = generate_synthetic_object("chair", 1);
  const IndexedMesh mesh = union_mesh(r);
  for (auto _ : state) benchmark::DoNotOptimize(canonical_face_order(mesh));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(mesh.faces.size()));
}
BENCHMARK(BM_CanonicalFaceOrder);

void BM_ResidualQuantize(benchmark::State& state) {
  Rng rng(1);
  const auto codes = static_cast<Eigen::Index>(state.range(0));
  Matrix z(256, 32);
  Matrix book(codes, 32);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < book.size(); ++i) book.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(residual_quantize(z, book, 2));
}
BENCHMARK(BM_ResidualQuantize)->Arg(512)->Arg(8192);

void BM_Chamfer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud a = sample_surface(part_meshes(generate_synthetic_object("table", 1)), n, 1);
  const PointCloud b = sample_surface(part_meshes(generate_synthetic_object("table", 2)), n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(2048)->Arg(8192);

void BM_DecodeStep(benchmark::State& state) {
  TransformerConfig c;
  c.codebook_size = 512;
  c.layers = 4;
  c.heads = 4;
  c.width = 128;
  c.context = 4096;
  const Transformer model(c, 1);
  TransformerExample prefix;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) prefix.tokens.push_back(i % 512);
  const DecodingSession base(model, prefix);
  for (auto _ : state) {
    DecodingSession s = base;
    s.push(7);
    benchmark::DoNotOptimize(s.logits());
  }
}
BENCHMARK(BM_DecodeStep)->Arg(64)->Arg(1024);

void BM_TransformerForward(benchmark::State& state) {
  TransformerConfig c;
  c.codebook_size = 512;
  c.layers = 2;
  c.heads = 4;
  c.width = 64;
  c.context = 1024;
  const Transformer model(c, 1);
  TransformerExample e;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) e.tokens.push_back(i % 512);
  for (auto _ : state) {
    nn::Tape tape;
    auto f = model.forward(tape, {&e});
    tape.backward(f.loss);
    benchmark::DoNotOptimize(f.loss.value());
  }
}
BENCHMARK(BM_TransformerForward)->Arg(256)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
