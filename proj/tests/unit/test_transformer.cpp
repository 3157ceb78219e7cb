#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hiermesh/error.hpp"
#include "hiermesh/rng.hpp"
#include "hiermesh/sequencing.hpp"
#include "hiermesh/transformer.hpp"

using namespace hiermesh;

namespace {

TransformerConfig tiny(int structure_codebook = 0) {
  TransformerConfig c;
  c.codebook_size = 16;
  c.layers = 2;
  c.heads = 2;
  c.width = 16;
  c.context = 200;
  c.structure_codebook = structure_codebook;
  return c;
}

std::vector<int> random_tokens(Rng& rng, int n, int codebook) {
  std::vector<int> t;
  for (int i = 0; i < n; ++i) t.push_back(rng.uniform_int(0, codebook - 1));
  return t;
}

TransformerExample conditioned_example(Rng& rng) {
  TransformerExample e;
  e.structure = random_tokens(rng, 2 * kTokensPerPart, 8);
  e.part = 1;
  e.junction = random_tokens(rng, 12, 16);
  e.tokens = random_tokens(rng, 18, 16);
  return e;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("structure streams carry SOS, EOS, padding and the loss mask") {
  const VocabLayout v{10};
  const TokenStream s = assemble_structure_stream({3, 4, 5}, v, 8, 7);
  CHECK(s.sequence == std::vector<int>{v.sos(), 3, 4, 5, v.eos(), v.pad(), v.pad()});
  CHECK(s.targets == std::vector<int>{3, 4, 5, v.eos(), v.pad(), v.pad(), v.pad()});
  CHECK(s.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0});
  CHECK_THROWS_AS(assemble_structure_stream(std::vector<int>(7, 1), v, 8), Error);
  CHECK_THROWS_AS(assemble_structure_stream({10}, v, 8), Error);
  CHECK(v.size() == 13);
}

TEST_CASE("condition rows share one position id") {
  CHECK(flexible_positions(3, 6) == std::vector<int>{0, 0, 0, 1, 2, 3});
  CHECK(flexible_positions(0, 3) == std::vector<int>{1, 2, 3});
  CHECK_THROWS_AS(flexible_positions(4, 3), Error);
}

TEST_CASE("an untrained model is close to uniform") {
  Rng rng(1);
  const Transformer model(tiny(), 4);
  TransformerExample e;
  e.tokens = random_tokens(rng, 40, 16);
  nn::Tape tape;
  const auto f = model.forward(tape, {&e});
  CHECK(f.loss.value()(0, 0) == doctest::Approx(std::log(19.0)).epsilon(0.05));
}

TEST_CASE("later tokens never change earlier logits") {
  Rng rng(2);
  const Transformer model(tiny(8), 5);
  TransformerExample e = conditioned_example(rng);
  const Matrix before = model.logits(e);
  const int changed = 10;
  e.tokens[changed] = (e.tokens[changed] + 1) % 16;
  const Matrix after = model.logits(e);
  // Row of token k is prefix + 1 + k.
  const int row = e.prefix_length() + 1 + changed;
  CHECK(max_abs(before.topRows(row) - after.topRows(row)) == 0.0);
  CHECK(max_abs(before.bottomRows(before.rows() - row) - after.bottomRows(after.rows() - row)) > 0.0);
}

TEST_CASE("packed examples do not see each other") {
  Rng rng(3);
  const Transformer model(tiny(8), 6);
  const TransformerExample a = conditioned_example(rng);
  const TransformerExample b = conditioned_example(rng);
  nn::Tape tape;
  const auto f = model.forward(tape, {&a, &b});
  const Matrix alone = model.logits(b);
  CHECK(max_abs(f.logits.value().middleRows(f.offsets[1], alone.rows()) - alone) < 1e-10);
}

TEST_CASE("the key/value cache matches the full pass") {
  Rng rng(4);
  for (int conditioned = 0; conditioned < 2; ++conditioned) {
    const Transformer model(tiny(conditioned ? 8 : 0), 7);
    TransformerExample e = conditioned ? conditioned_example(rng) : TransformerExample{};
    if (!conditioned) e.tokens = random_tokens(rng, 20, 16);
    const Matrix full = model.logits(e);
    TransformerExample head = e;
    head.tokens.resize(5);
    DecodingSession session(model, head);
    const int base = e.prefix_length() + 5;
    CHECK(max_abs(session.logits() - full.row(base)) < 1e-9);
    for (std::size_t k = 5; k < e.tokens.size(); ++k) {
      session.push(e.tokens[k]);
      CHECK(max_abs(session.logits() - full.row(base + static_cast<int>(k) - 4)) < 1e-9);
    }
    CHECK(session.length() == base + 1 + static_cast<int>(e.tokens.size()) - 5);
  }
}

TEST_CASE("condition rows receive no loss") {
  Rng rng(5);
  const Transformer model(tiny(8), 8);
  const TransformerExample e = conditioned_example(rng);
  nn::Tape tape;
  const auto f = model.forward(tape, {&e});
  for (int r = 0; r < e.prefix_length(); ++r) CHECK(f.mask[static_cast<std::size_t>(r)] == 0);
  long counted = 0;
  for (auto m : f.mask) counted += m;
  CHECK(counted == static_cast<long>(e.tokens.size()) + 1);
}

TEST_CASE("sampling is deterministic per seed and validated") {
  Rng rng(6);
  Transformer model(tiny(), 9);
  std::vector<TransformerExample> data(1);
  data[0].tokens = random_tokens(rng, 12, 16);
  nn::Adam adam(model.store());
  TransformerTrainConfig tc;
  tc.steps = 150;
  tc.lr = 1e-2;
  tc.batch = 0;
  train_transformer(model, adam, data, tc);
  CHECK(evaluate_transformer(model, data).accuracy == 1.0);

  SamplingConfig greedy;
  greedy.temperature = 0.0;
  greedy.beams = 1;
  CHECK(sample_sequence(model, TransformerExample{}, 6, greedy).tokens == data[0].tokens);

  SamplingConfig nucleus;
  nucleus.mode = SamplingMode::kNucleus;
  nucleus.seed = 11;
  nucleus.retries = 50;
  const auto a = sample_sequence(model, TransformerExample{}, 1, nucleus);
  const auto b = sample_sequence(model, TransformerExample{}, 1, nucleus);
  CHECK(a.tokens == b.tokens);

  SamplingConfig bad;
  bad.top_p = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = SamplingConfig{};
  bad.beams = 0;
  CHECK_THROWS_AS(sample_sequence(model, TransformerExample{}, 1, bad), Error);
  // Twelve tokens are never a multiple of five.
  greedy.retries = 2;
  try {
    sample_sequence(model, TransformerExample{}, 5, greedy);
    FAIL("expected a sampling error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSampling);
  }
}

TEST_CASE("checkpoints restore weights and the optimizer") {
  Rng rng(7);
  Transformer model(tiny(8), 10);
  std::vector<TransformerExample> data{conditioned_example(rng), conditioned_example(rng)};
  nn::Adam adam(model.store());
  TransformerTrainConfig tc;
  tc.steps = 3;
  tc.batch = 0;
  tc.lr = 1e-3;
  train_transformer(model, adam, data, tc);
  const auto path = std::filesystem::temp_directory_path() / "hiermesh_transformer.ckpt";
  model.save(path, &adam);
  Transformer back = Transformer::load(path);
  CHECK(back.trained_steps() == 3);
  CHECK(max_abs(back.logits(data[0]) - model.logits(data[0])) == 0.0);

  nn::Adam adam_back(back.store());
  back.load_optimizer(path, adam_back);
  std::filesystem::remove(path);
  tc.steps = 5;
  train_transformer(model, adam, data, tc);
  train_transformer(back, adam_back, data, tc);
  CHECK(max_abs(back.logits(data[1]) - model.logits(data[1])) == 0.0);
}

TEST_CASE("malformed examples are rejected") {
  const Transformer model(tiny(8), 11);
  TransformerExample e;
  e.structure = std::vector<int>(kTokensPerPart, 0);
  e.part = 3;
  e.tokens = {1};
  CHECK_THROWS_AS(model.logits(e), Error);
  e.part = 0;
  e.tokens = {99};
  CHECK_THROWS_AS(model.logits(e), Error);
}
