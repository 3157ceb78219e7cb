#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hiermesh/codec.hpp"
#include "hiermesh/config.hpp"
#include "hiermesh/dataset.hpp"
#include "hiermesh/geometry_codec.hpp"
#include "hiermesh/nn/gradcheck.hpp"
#include "hiermesh/nn/layers.hpp"
#include "hiermesh/nn/ops.hpp"
#include "hiermesh/sequencing.hpp"
#include "hiermesh/structure_codec.hpp"
#include "hiermesh/transformer.hpp"

namespace hiermesh::testing {

namespace {

using nn::Tape;
using nn::Var;

// Random fixed weights turn a matrix output into a scalar without symmetry.
Var weighted_sum(Tape& t, Var out, Rng& rng) {
  Matrix w(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  return nn::sum(nn::mul(out, t.constant(w)));
}

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

GradientCase check(const std::string& name, nn::ParameterStore& store, const std::function<Var(Tape&)>& loss) {
  const auto r = nn::gradient_check(store, loss, 1e-5);
  return {name, r.max_relative_error, r.coordinates};
}

std::vector<std::vector<int>> ring_adjacency(int n) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    adj[i] = {(i + n - 1) % n, (i + 1) % n};
    std::sort(adj[i].begin(), adj[i].end());
  }
  return adj;
}

}  // namespace

std::vector<GradientCase> gradient_suite(std::uint64_t seed) {
  std::vector<GradientCase> out;
  Rng rng(seed);
  const int rows = 6;
  const int width = 8;

  for (nn::LayerKind kind : nn::all_layer_kinds()) {
    nn::ParameterStore store;
    nn::LayerSpec spec;
    spec.kind = kind;
    spec.in = width;
    spec.out = kind == nn::LayerKind::kLinear || kind == nn::LayerKind::kGraphAgg ? 5 : width;
    spec.depth = 2;
    spec.heads = 2;
    nn::Parameter& input = store.add("input", random_matrix(rows, width, rng));
    std::vector<std::pair<std::string, nn::LayerInput>> variants;
    nn::LayerInput base;
    switch (kind) {
      case nn::LayerKind::kEmbedding:
        spec.in = 11;
        base.indices = {0, 3, 3, 10, 7, 1};
        variants.emplace_back("", base);
        break;
      case nn::LayerKind::kGraphAgg:
        base.neighborhoods = nn::neighborhoods_with_self(ring_adjacency(rows));
        variants.emplace_back("", base);
        break;
      case nn::LayerKind::kResNet1d:
        base.segments = {{0, 4}, {4, rows}};
        variants.emplace_back("", base);
        break;
      case nn::LayerKind::kAttention: {
        spec.causal = true;
        variants.emplace_back(" causal", base);
        nn::LayerInput packed = base;
        packed.blocks = {{0, 2, 0, 2, true}, {2, rows, 2, rows, true}};
        variants.emplace_back(" packed", packed);
        variants.emplace_back(" cross", base);
        break;
      }
      default:
        variants.emplace_back("", base);
    }
    Rng init(seed + 1);
    auto layer = nn::make_layer(store, "layer", spec, init);
    std::unique_ptr<nn::Layer> cross_layer;
    nn::Parameter* context = nullptr;
    if (kind == nn::LayerKind::kAttention) {
      nn::LayerSpec cs = spec;
      cs.causal = false;
      cross_layer = nn::make_layer(store, "cross", cs, init);
      context = &store.add("context", random_matrix(4, width, rng));
    }
    if (kind == nn::LayerKind::kLayerNorm) {
      // Non-trivial affine parameters.
      for (auto& p : store.all()) {
        if (&p != &input) p.value = random_matrix(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), rng);
      }
    }
    for (auto& [suffix, in] : variants) {
      const std::uint64_t wseed = rng.next();
      const bool cross = suffix == " cross";
      auto loss = [&, in, wseed, cross](Tape& t) {
        nn::LayerInput li = in;
        if (kind != nn::LayerKind::kEmbedding) li.x = t.param(input);
        Rng w(wseed);
        if (cross) {
          li.context = t.param(*context);
          return weighted_sum(t, cross_layer->forward(t, li), w);
        }
        return weighted_sum(t, layer->forward(t, li), w);
      };
      out.push_back(check(std::string(nn::to_string(kind)) + suffix, store, loss));
    }
  }

  // Loss ops.
  {
    nn::ParameterStore store;
    nn::Parameter& x = store.add("x", random_matrix(rows, 7, rng));
    const std::vector<int> targets{0, 6, 2, 2, 5, 1};
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
    out.push_back(check("cross_entropy", store, [&](Tape& t) { return nn::cross_entropy(t.param(x), targets, mask); }));
    std::vector<double> flags;
    for (int i = 0; i < rows * 7; ++i) flags.push_back(i % 3 == 0 ? 1.0 : 0.0);
    out.push_back(check("bce_with_logits", store, [&](Tape& t) {
      return nn::bce_with_logits(nn::reshape(t.param(x), rows * 7, 1), flags);
    }));
    const Matrix target = random_matrix(rows, 7, rng);
    out.push_back(check("mse", store, [&](Tape& t) { return nn::mse(t.param(x), t.constant(target)); }));
    out.push_back(check("gelu", store, [&](Tape& t) {
      Rng w(5);
      return weighted_sum(t, nn::gelu(t.param(x)), w);
    }));
    out.push_back(check("sigmoid", store, [&](Tape& t) {
      Rng w(6);
      return weighted_sum(t, nn::sigmoid(t.param(x)), w);
    }));
    auto groups = std::make_shared<const nn::Groups>(nn::Groups{{0, 1}, {2}, {3, 4, 5}});
    out.push_back(check("aggregate_mean", store, [&](Tape& t) {
      Rng w(8);
      return weighted_sum(t, nn::aggregate_mean(t.param(x), groups), w);
    }));
    out.push_back(check("shift_rows", store, [&](Tape& t) {
      Rng w(9);
      return weighted_sum(t, nn::shift_rows(t.param(x), -1, {{0, 3}, {3, rows}}), w);
    }));
    out.push_back(check("concat_slice", store, [&](Tape& t) {
      Rng w(10);
      Var v = t.param(x);
      Var c = nn::concat_cols({nn::slice_cols(v, 1, 3), nn::slice_rows(nn::concat_rows({v, v}), 2, rows)});
      return weighted_sum(t, c, w);
    }));
  }

  // Whole conditioned transformer, through the masked token loss.
  {
    TransformerConfig cfg;
    cfg.codebook_size = 9;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.width = 8;
    cfg.context = 160;
    cfg.structure_codebook = 7;
    Transformer model(cfg, seed);
    TransformerExample e;
    for (int i = 0; i < 2 * kTokensPerPart; ++i) e.structure.push_back(static_cast<int>(rng.below(7)));
    e.part = 1;
    e.junction = {1, 2, 3, 4, 5, 6};
    e.tokens = {8, 0, 4, 4, 2, 7};
    TransformerExample other;
    other.structure = e.structure;
    other.part = 0;
    other.tokens = {3, 3, 1};
    // Perturb every parameter away from its initial symmetric values.
    for (auto& p : model.store().all()) p.value += random_matrix(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), rng, 0.05);
    std::vector<nn::Parameter*> params;
    for (auto& p : model.store().all()) {
      if (p.trainable) params.push_back(&p);
    }
    const auto r = nn::gradient_check(model.store(), [&](Tape& t) { return model.forward(t, {&e, &other}).loss; }, 1e-5,
                                      params);
    out.push_back({"transformer", r.max_relative_error, r.coordinates});
  }
  return out;
}

PrefixMaskCheck prefix_mask_check(std::uint64_t seed) {
  TransformerConfig cfg;
  cfg.codebook_size = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.width = 16;
  cfg.context = 200;
  cfg.structure_codebook = 16;
  Transformer model(cfg, seed);
  Rng rng(seed);
  TransformerExample e;
  for (int i = 0; i < 2 * kTokensPerPart; ++i) e.structure.push_back(static_cast<int>(rng.below(16)));
  e.part = 0;
  for (int i = 0; i < 12; ++i) e.junction.push_back(static_cast<int>(rng.below(16)));
  for (int i = 0; i < 18; ++i) e.tokens.push_back(static_cast<int>(rng.below(16)));

  PrefixMaskCheck result;
  result.prefix_rows = e.prefix_length();
  Tape tape;
  auto f = model.forward(tape, {&e});
  tape.backward(f.loss);
  const Matrix g = f.logits.grad();
  result.max_analytic = g.topRows(result.prefix_rows).cwiseAbs().maxCoeff();
  result.max_target_grad = g.bottomRows(g.rows() - result.prefix_rows).cwiseAbs().maxCoeff();

  // Finite differences of the same masked loss with respect to the logits.
  const Matrix logits = f.logits.value();
  auto loss_at = [&](const Matrix& l) {
    Tape t;
    return nn::cross_entropy(t.constant(l), f.targets, f.mask).scalar();
  };
  const double eps = 1e-4;
  for (int r = 0; r < result.prefix_rows; ++r) {
    for (int c = 0; c < logits.cols(); ++c) {
      Matrix plus = logits;
      Matrix minus = logits;
      plus(r, c) += eps;
      minus(r, c) -= eps;
      result.max_numeric = std::max(result.max_numeric, std::abs(loss_at(plus) - loss_at(minus)) / (2 * eps));
    }
  }
  return result;
}

namespace {

void tally(RqPropertyReport& report, const RqResult& rq, const FaceLayout& layout) {
  const FaceResiduals r = face_residuals(rq, layout);
  ++report.batches;
  for (Eigen::Index f = 0; f < r.depth1.size(); ++f) {
    ++report.faces;
    if (r.depth2(f) > r.depth1(f)) ++report.violations;
    if (r.depth1(f) > 0.0) report.max_ratio = std::max(report.max_ratio, r.depth2(f) / r.depth1(f));
  }
}

std::vector<int> pick(int n, int k, Rng& rng) {
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
  return out;
}

}  // namespace

RqPropertyReport rq_property(int batches, std::uint64_t seed) {
  RqPropertyReport report;
  auto objects = synthetic_objects(6);
  CodecShape shape;
  shape.codebook_size = 64;
  shape.code_dim = 16;
  shape.width = 48;
  shape.encoder_layers = 2;
  shape.decoder_blocks = 1;
  CodecTrainConfig train;
  train.batch = 4;
  train.lr = 1e-3;
  train.dead_window = 10;
  train.seed = seed;
  Rng rng(seed);

  GeometryCodecConfig gcfg;
  gcfg.shape = shape;
  GeometryCodec geometry(gcfg, seed);
  nn::Adam gadam(geometry.store());
  std::vector<GeometryExample> parts;
  for (const auto& r : objects) {
    for (auto& e : geometry_examples(r, kDefaultJunctionThreshold)) parts.push_back(std::move(e));
  }
  const int half = batches / 2;
  for (int b = 0; b < half; ++b) {
    train.steps = b + 1;
    train_geometry_codec(geometry, gadam, parts, train);
    std::vector<const GeometryExample*> batch;
    for (int i : pick(static_cast<int>(parts.size()), 4, rng)) batch.push_back(&parts[static_cast<std::size_t>(i)]);
    nn::Tape tape;
    const auto fwd = geometry.forward(batch, tape, nullptr);
    tally(report, fwd.rq, fwd.layout);
  }

  for (auto& r : objects) attach_geometry_features(r, geometry);
  std::vector<StructureSequence> seqs;
  for (const auto& r : objects) seqs.push_back(build_structure_sequence(r));
  StructureCodecConfig scfg;
  scfg.shape = shape;
  StructureCodec structure(scfg, seed);
  nn::Adam sadam(structure.store());
  train.batch = 2;
  for (int b = 0; b < batches - half; ++b) {
    train.steps = b + 1;
    train_structure_codec(structure, sadam, seqs, train);
    std::vector<const StructureSequence*> batch;
    for (int i : pick(static_cast<int>(seqs.size()), 2, rng)) batch.push_back(&seqs[static_cast<std::size_t>(i)]);
    nn::Tape tape;
    const auto fwd = structure.forward(batch, tape, nullptr);
    tally(report, fwd.rq, fwd.layout);
  }
  return report;
}

std::vector<ConstantCheck> full_scale_constants() {
  const RunConfig c = preset_config("paper");
  validate(c);
  return {
      {"grid resolution", 128, static_cast<double>(kGridResolution)},
      {"config grid", 128, static_cast<double>(c.constants.grid)},
      {"tokens per face", 6, static_cast<double>(kTokensPerFace)},
      {"config tokens per face", 6, static_cast<double>(c.constants.tokens_per_face)},
      {"rq depth", 2, static_cast<double>(kRqDepth)},
      {"config rq depth", 2, static_cast<double>(c.constants.rq_depth)},
      {"structure codebook", 8192, static_cast<double>(c.structure_codec.model.shape.codebook_size)},
      {"geometry codebook", 16384, static_cast<double>(c.geometry_codec.model.shape.codebook_size)},
      {"structure transformer vocabulary", 8192, static_cast<double>(c.structure_transformer.model.codebook_size)},
      {"geometry transformer vocabulary", 16384, static_cast<double>(c.geometry_transformer.model.codebook_size)},
      {"geometry condition codebook", 8192, static_cast<double>(c.geometry_transformer.model.structure_codebook)},
      {"structure context", 4608, static_cast<double>(c.structure_transformer.model.context)},
      {"geometry context", 4608, static_cast<double>(c.geometry_transformer.model.context)},
      {"metric cloud points", 2048, static_cast<double>(c.metrics.cloud_points)},
      {"instantiation points", 2048, static_cast<double>(c.metrics.instantiation.points)},
      {"instantiation states", 10, static_cast<double>(c.metrics.instantiation.states)},
      {"revolute range (deg)", 90, kRevoluteRange * 180.0 / M_PI},
      {"config revolute range (deg)", 90, c.constants.revolute_range * 180.0 / M_PI},
  };
}

int face_count(const ObjectRecord& record) {
  int n = 0;
  for (const auto& p : record.parts) n += static_cast<int>(p.mesh.faces.size());
  return n;
}

std::vector<ObjectRecord> synthetic_objects(int count) {
  static const char* kCategories[] = {"chair", "table", "storage"};
  std::vector<ObjectRecord> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(quantize_object(generate_synthetic_object(kCategories[i % 3], static_cast<std::uint64_t>(i))));
  }
  return out;
}

std::vector<ObjectRecord> smallest_objects(int count, int pool) {
  auto all = synthetic_objects(pool);
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return face_count(all[a]) < face_count(all[b]); });
  order.resize(static_cast<std::size_t>(std::min<int>(count, pool)));
  std::sort(order.begin(), order.end());
  std::vector<ObjectRecord> out;
  for (int i : order) out.push_back(std::move(all[i]));
  return out;
}

}  // namespace hiermesh::testing
