// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hiermesh/dataset.hpp"
#include "hiermesh/generation.hpp"
#include "hiermesh/metrics.hpp"
#include "metric_oracles.hpp"
#include "properties.hpp"
#include "suites.hpp"

using namespace hiermesh;
namespace ht = hiermesh::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

const double kChamferBound = 2.0 / kGridResolution;

CodecShape codec_shape() {
  CodecShape s;
  s.codebook_size = 512;
  s.code_dim = 32;
  s.width = 128;
  s.encoder_layers = 4;
  s.decoder_blocks = 2;
  return s;
}

CodecTrainConfig codec_train(int steps) {
  CodecTrainConfig t;
  t.steps = steps;
  t.batch = 0;
  t.lr = 2e-3;
  t.dead_window = 50;
  return t;
}

struct Codecs {
  GeometryCodec geometry{GeometryCodecConfig{codec_shape()}, 1};
  StructureCodec structure{StructureCodecConfig{codec_shape()}, 1};
  std::vector<GeometryExample> parts;
  std::vector<StructureSequence> sequences;
};

// Trains both codecs on `objects`, attaching geometry features in place.
Codecs train_codecs(std::vector<ObjectRecord>& objects) {
  Codecs c;
  for (const auto& r : objects) {
    for (auto& e : geometry_examples(r, kDefaultJunctionThreshold)) c.parts.push_back(std::move(e));
  }
  nn::Adam gadam(c.geometry.store());
  train_geometry_codec(c.geometry, gadam, c.parts, codec_train(600));
  for (auto& r : objects) {
    attach_geometry_features(r, c.geometry);
    c.sequences.push_back(build_structure_sequence(r));
  }
  nn::Adam sadam(c.structure.store());
  train_structure_codec(c.structure, sadam, c.sequences, codec_train(1200));
  return c;
}

Outcome sequencing() {
  const auto t0 = Clock::now();
  const auto r = ht::sequencing_properties(500, 1);
  const double secs = since(t0);
  return {r.ok() && r.max_error <= 1.0 / 256 && secs < 60,
          fmt("%d meshes, %d failures, max quantization error %.3g, %.1fs %s", r.cases, r.failures, r.max_error, secs,
              r.first_failure.c_str())};
}

Outcome boxes() {
  const auto t0 = Clock::now();
  const auto r = ht::box_properties(1000, 2);
  const double secs = since(t0);
  return {r.ok() && secs < 10, fmt("%d boxes, %d failures, %.2fs %s", r.cases, r.failures, secs, r.first_failure.c_str())};
}

Outcome kinematics() {
  const auto t0 = Clock::now();
  const auto r = ht::kinematics_properties(10000, 3);
  const double secs = since(t0);
  return {r.ok() && r.max_error <= 1e-9 && secs < 10,
          fmt("%d joints, %d failures, max error %.3g, %.2fs %s", r.cases, r.failures, r.max_error, secs,
              r.first_failure.c_str())};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto cases = ht::gradient_suite();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    if (c.max_relative_error >= worst) {
      worst = c.max_relative_error;
      worst_name = c.name;
    }
  }
  const auto mask = ht::prefix_mask_check();
  const double secs = since(t0);
  const bool masked = mask.prefix_rows > 0 && mask.max_analytic == 0.0 && mask.max_numeric == 0.0 &&
                      mask.max_target_grad > 0.0;
  return {!cases.empty() && worst < 1e-4 && masked && secs < 300,
          fmt("%zu cases, worst %.3g (%s); prefix gradient analytic %.3g numeric %.3g over %d rows; %.1fs",
              cases.size(), worst, worst_name.c_str(), mask.max_analytic, mask.max_numeric, mask.prefix_rows, secs)};
}

Outcome residuals() {
  const auto r = ht::rq_property(100);
  return {r.batches == 100 && r.faces > 0 && r.violations == 0,
          fmt("%d batches, %ld faces, %ld violations, worst depth2/depth1 %.3f", r.batches, r.faces, r.violations,
              r.max_ratio)};
}

Outcome codec_overfit() {
  const auto t0 = Clock::now();
  std::vector<ObjectRecord> objects = ht::synthetic_objects(16);
  const Codecs c = train_codecs(objects);
  const GeometryEval g = evaluate_geometry_codec(c.geometry, c.parts, 20000);
  const StructureEval s = evaluate_structure_codec(c.structure, c.sequences);
  const bool pass = s.bin_accuracy >= 0.99 && s.joint_type_accuracy == 1.0 && g.bin_accuracy >= 0.95 &&
                    g.junction_auc >= 0.95 && g.mean_chamfer <= kChamferBound;
  return {pass, fmt("structure bins %.4f, joint types %.4f; geometry bins %.4f, junction AUC %.4f, chamfer %.5f; %.0fs",
                    s.bin_accuracy, s.joint_type_accuracy, g.bin_accuracy, g.junction_auc, g.mean_chamfer, since(t0))};
}

// Shared by the transformer and ablation criteria.
struct Pipeline {
  std::vector<ObjectRecord> objects;
  Codecs codecs;
  std::optional<Transformer> structure;
  std::optional<Transformer> geometry;
  std::vector<TransformerExample> structure_examples;
  std::vector<TransformerExample> geometry_examples;
  double seconds = 0.0;
};

Pipeline& pipeline() {
  static std::optional<Pipeline> p;
  if (p) return *p;
  const auto t0 = Clock::now();
  p.emplace();
  p->objects = ht::smallest_objects(8, 24);
  p->codecs = train_codecs(p->objects);
  TransformerConfig sc;
  sc.codebook_size = 512;
  sc.layers = 2;
  sc.heads = 4;
  sc.width = 64;
  sc.context = 1024;
  TransformerConfig gc = sc;
  gc.structure_codebook = 512;
  for (const auto& r : p->objects) {
    const TokenizedObject t = tokenize_object(r, p->codecs.structure, p->codecs.geometry);
    p->structure_examples.push_back(structure_transformer_example(t));
    for (auto& e : geometry_transformer_examples(t, gc.context)) p->geometry_examples.push_back(std::move(e));
  }
  TransformerTrainConfig tc;
  tc.steps = 300;
  tc.batch = 0;
  tc.lr = 3e-3;
  p->structure.emplace(sc, 1);
  nn::Adam sa(p->structure->store());
  tc.seed = 1;
  train_transformer(*p->structure, sa, p->structure_examples, tc);
  p->geometry.emplace(gc, 2);
  nn::Adam ga(p->geometry->store());
  tc.seed = 2;
  train_transformer(*p->geometry, ga, p->geometry_examples, tc);
  p->seconds = since(t0);
  return *p;
}

GenerationConfig generation_config() {
  GenerationConfig g;
  g.max_part_faces = 100;
  return g;
}

Outcome transformer_overfit() {
  Pipeline& p = pipeline();
  const auto t0 = Clock::now();
  const double s_acc = evaluate_transformer(*p.structure, p.structure_examples).accuracy;
  const double g_acc = evaluate_transformer(*p.geometry, p.geometry_examples).accuracy;
  const GenerationModels models{&p.codecs.structure, &p.codecs.geometry, &*p.structure, &*p.geometry};

  GenerationConfig greedy = generation_config();
  greedy.structure_sampling.temperature = 0.0;
  greedy.geometry_sampling.temperature = 0.0;
  const GenerationResult g = generate_object(models, greedy, 7);
  double best = std::numeric_limits<double>::infinity();
  if (g.ok) {
    for (const auto& r : p.objects) best = std::min(best, mesh_chamfer(union_mesh(g.object), union_mesh(r), 20000, 1));
  }

  int valid = 0;
  for (int s = 0; s < 50; ++s) valid += generate_object(models, generation_config(), 100 + static_cast<std::uint64_t>(s)).ok;
  const bool pass = s_acc >= 0.99 && g_acc >= 0.99 && g.ok && best <= kChamferBound && valid >= 45;
  return {pass, fmt("next-token accuracy %.4f / %.4f; greedy chamfer %.5f%s; %d/50 samples valid; %.0fs training, %.0fs "
                    "sampling",
                    s_acc, g_acc, best, g.ok ? "" : (" (" + g.diagnostic.reason + ")").c_str(), valid, p.seconds,
                    since(t0))};
}

Outcome junction_ablation() {
  Pipeline& p = pipeline();
  std::vector<TransformerExample> with;
  std::vector<TransformerExample> without;
  for (const auto& e : p.geometry_examples) {
    if (e.junction.empty()) continue;
    with.push_back(e);
    without.push_back(e);
    without.back().junction.clear();
  }
  if (with.empty()) return {false, "no part has a junction prefix"};
  const double a = evaluate_transformer(*p.geometry, with).mean_nll;
  const double b = evaluate_transformer(*p.geometry, without).mean_nll;
  return {b - a > 0.0, fmt("%zu junction-adjacent parts: mean loss %.5f with prefix, %.5f without (margin %.5f)",
                           with.size(), a, b, b - a)};
}

Outcome metric_oracles() {
  const auto oracle = ht::metric_oracles(200, 9);
  const double self_id = ht::self_instantiation_distance(3, 10);
  const auto nna = ht::same_distribution_nna(10, 16, 2048);
  const double mean = std::accumulate(nna.begin(), nna.end(), 0.0) / static_cast<double>(nna.size());
  const auto [lo, hi] = std::minmax_element(nna.begin(), nna.end());
  return {oracle.mismatches == 0 && self_id == 0.0 && mean >= 0.35 && mean <= 0.65,
          fmt("%d oracle trials, %d mismatches %s; ID(X,X) %.3g over 10 states; same-distribution 1-NNA mean %.3f "
              "(range %.3f-%.3f over %zu seeds)",
              oracle.trials, oracle.mismatches, oracle.first_mismatch.c_str(), self_id, mean, *lo, *hi, nna.size())};
}

Outcome constants() {
  std::ostringstream bad;
  int failed = 0;
  const auto checks = ht::full_scale_constants();
  for (const auto& c : checks) {
    if (!c.ok()) {
      ++failed;
      bad << " " << c.name << "=" << c.actual;
    }
  }
  return {failed == 0, fmt("%zu constants, %d mismatches%s", checks.size(), failed, bad.str().c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sequencing invariants", sequencing},
      {"box triangulation", boxes},
      {"joint kinematics", kinematics},
      {"gradient suite and prefix masking", gradients},
      {"residual quantization depth", residuals},
      {"codec overfit", codec_overfit},
      {"transformer overfit and sampling", transformer_overfit},
      {"junction prefix ablation", junction_ablation},
      {"metric oracles", metric_oracles},
      {"full-scale constants", constants},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
