#include "hiermesh/geometry_codec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "codec_io.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/metrics.hpp"
#include "hiermesh/nn/checkpoint.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh {

namespace {

std::array<Point3, 3> triangle(const IndexedMesh& mesh, const Face& f) {
  return {mesh.vertices[static_cast<std::size_t>(f[0])], mesh.vertices[static_cast<std::size_t>(f[1])],
          mesh.vertices[static_cast<std::size_t>(f[2])]};
}

double sample_to_triangle(const std::array<Point3, 3>& from, const std::array<Point3, 3>& to) {
  const Point3 centroid = (from[0] + from[1] + from[2]) / 3.0;
  double best = point_triangle_distance(centroid, to[0], to[1], to[2]);
  for (const Point3& p : from) best = std::min(best, point_triangle_distance(p, to[0], to[1], to[2]));
  return best;
}

constexpr int kDescriptorWidth = 8;

RowVector part_descriptor(const IndexedMesh& mesh) {
  const Aabb box = compute_aabb(mesh);
  RowVector d(kDescriptorWidth);
  d << box.min.x(), box.min.y(), box.min.z(), box.max.x(), box.max.y(), box.max.z(), surface_area(mesh),
      static_cast<double>(mesh.faces.size()) / 100.0;
  return d;
}

}  // namespace

double face_pair_distance(const std::array<Point3, 3>& a, const std::array<Point3, 3>& b) {
  return std::min(sample_to_triangle(a, b), sample_to_triangle(b, a));
}

JunctionLabeling label_junction_faces(const ObjectRecord& record, int part_index, double tau) {
  HIERMESH_CHECK(part_index >= 0 && part_index < static_cast<int>(record.parts.size()), ErrorKind::kValidation,
                 "part index out of range");
  const IndexedMesh& mesh = record.parts[static_cast<std::size_t>(part_index)].mesh;
  JunctionLabeling out;
  out.distances.assign(mesh.faces.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < record.parts.size(); ++j) {
    if (static_cast<int>(j) == part_index) continue;
    const IndexedMesh& other = record.parts[j].mesh;
    const Aabb other_box = compute_aabb(other);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const auto tri = triangle(mesh, mesh.faces[f]);
      // Skip parts whose box is already farther than the current best.
      Point3 gap = Point3::Zero();
      const Aabb face_box{tri[0].cwiseMin(tri[1]).cwiseMin(tri[2]), tri[0].cwiseMax(tri[1]).cwiseMax(tri[2])};
      for (int a = 0; a < 3; ++a) {
        gap[a] = std::max({0.0, other_box.min[a] - face_box.max[a], face_box.min[a] - other_box.max[a]});
      }
      if (gap.norm() > out.distances[f]) continue;
      for (const Face& g : other.faces) {
        out.distances[f] = std::min(out.distances[f], face_pair_distance(tri, triangle(other, g)));
      }
    }
  }
  out.flags.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) out.flags[f] = out.distances[f] < tau;
  return out;
}

IndexedMesh canonical_mesh(const IndexedMesh& mesh) { return canonical_face_order(mesh).mesh; }

std::vector<GeometryExample> geometry_examples(const ObjectRecord& record, double junction_threshold) {
  ObjectRecord canonical = record;
  for (PartRecord& p : canonical.parts) p.mesh = canonical_mesh(p.mesh);
  std::vector<GeometryExample> out;
  for (std::size_t i = 0; i < canonical.parts.size(); ++i) {
    GeometryExample ex;
    ex.mesh = canonical.parts[i].mesh;
    for (const Face& f : ex.mesh.faces) {
      const FaceBins b = face_bins(ex.mesh, f);
      ex.bins.insert(ex.bins.end(), b.begin(), b.end());
    }
    ex.features = geometric_face_features(ex.mesh);
    const JunctionLabeling labels = label_junction_faces(canonical, static_cast<int>(i), junction_threshold);
    for (bool flag : labels.flags) ex.junction.push_back(flag ? 1.0 : 0.0);
    ex.descriptor = part_descriptor(ex.mesh);
    out.push_back(std::move(ex));
  }
  return out;
}

GeometryCodec::GeometryCodec(const GeometryCodecConfig& config, std::uint64_t seed)
    : GeometryCodec(config, Rng(mix_seed(seed, fnv1a("geometry-codec")))) {}

GeometryCodec::GeometryCodec(const GeometryCodecConfig& config, Rng rng)
    : config_(config),
      codebook_(store_, "codebook", CodebookConfig{config.shape.codebook_size, config.shape.code_dim}),
      encoder_(store_, "encoder", kGeometricFeatureWidth, config.shape, rng),
      decoder_(store_, "decoder", config.shape, rng),
      coord_head_(store_, "head.coords", config.shape.width, 9 * kGridResolution, rng),
      junction_head_(store_, "head.junction", config.shape.width, 1, rng),
      feature_head_(store_, "head.feature", config.shape.width, kGeometryFeatureDim, rng),
      feature_readout_(store_, "head.feature_readout", kGeometryFeatureDim, kDescriptorWidth, rng) {}

GeometryCodec::Forward GeometryCodec::forward(const std::vector<const GeometryExample*>& batch, nn::Tape& tape,
                                              nn::Var* loss_var) const {
  HIERMESH_CHECK(!batch.empty(), ErrorKind::kValidation, "empty geometry batch");
  Forward out;
  int rows = 0;
  for (const GeometryExample* ex : batch) {
    out.layout.append(ex->mesh);
    rows += static_cast<int>(ex->mesh.faces.size());
  }
  Matrix features(rows, kGeometricFeatureWidth);
  std::vector<int> bins;
  std::vector<double> junction;
  Matrix descriptors(static_cast<Eigen::Index>(batch.size()), kDescriptorWidth);
  auto part_groups = std::make_shared<nn::Groups>();
  int r = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const GeometryExample& ex = *batch[i];
    features.middleRows(r, ex.features.rows()) = ex.features;
    bins.insert(bins.end(), ex.bins.begin(), ex.bins.end());
    junction.insert(junction.end(), ex.junction.begin(), ex.junction.end());
    descriptors.row(static_cast<Eigen::Index>(i)) = ex.descriptor;
    std::vector<int> members(static_cast<std::size_t>(ex.features.rows()));
    std::iota(members.begin(), members.end(), r);
    part_groups->push_back(std::move(members));
    r += static_cast<int>(ex.features.rows());
  }

  const auto neighborhoods = nn::neighborhoods_with_self(out.layout.adjacency);
  nn::Var hidden = encoder_.hidden(tape, tape.constant(std::move(features)), neighborhoods);
  QuantizedFaces q = quantize_faces(tape, encoder_.slots(tape, hidden), out.layout, codebook_);
  nn::Var dec = decoder_(tape, q.face_codes, out.layout.segments);
  nn::Var coords = nn::reshape(coord_head_(tape, dec), 9 * rows, kGridResolution);
  nn::Var junction_logits = junction_head_(tape, dec);
  nn::Var feature = feature_head_(tape, nn::aggregate_mean(hidden, part_groups));
  nn::Var readout = feature_readout_(tape, feature);

  nn::Var l_coords = nn::cross_entropy(coords, bins);
  nn::Var l_junction = nn::bce_with_logits(junction_logits, junction);
  nn::Var l_feature = nn::l2_rows(readout, tape.constant(descriptors));
  const GeometryLossWeights& w = config_.weights;
  if (loss_var) {
    *loss_var = nn::add(nn::add(nn::scale(l_coords, w.coords), nn::scale(l_junction, w.junction)),
                        nn::add(nn::scale(q.commitment, w.commitment), nn::scale(l_feature, w.feature)));
  }
  out.loss.coords = l_coords.scalar();
  out.loss.junction = l_junction.scalar();
  out.loss.commitment = q.commitment.scalar();
  out.loss.feature = l_feature.scalar();
  out.loss.total = w.coords * out.loss.coords + w.junction * out.loss.junction + w.commitment * out.loss.commitment +
                   w.feature * out.loss.feature;

  out.prediction.coord_logits = coords.value();
  out.prediction.junction_prob = junction_logits.value().col(0).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  out.rq = std::move(q.rq);
  out.tokens = std::move(q.tokens);
  out.features = feature.value();
  return out;
}

namespace {

GeometryExample bare_example(const IndexedMesh& mesh) {
  GeometryExample ex;
  ex.mesh = canonical_mesh(mesh);
  ex.bins.assign(ex.mesh.faces.size() * 9, 0);
  ex.features = geometric_face_features(ex.mesh);
  ex.junction.assign(ex.mesh.faces.size(), 0.0);
  ex.descriptor = RowVector::Zero(kDescriptorWidth);
  return ex;
}

}  // namespace

std::vector<int> GeometryCodec::encode(const IndexedMesh& mesh) const {
  HIERMESH_CHECK(!mesh.faces.empty(), ErrorKind::kDegenerateInput, "cannot encode an empty mesh");
  const GeometryExample ex = bare_example(mesh);
  nn::Tape tape;
  return forward({&ex}, tape, nullptr).tokens;
}

GeometryPrediction GeometryCodec::decode(const std::vector<int>& tokens) const {
  check_token_length(tokens, kTokensPerFace, "geometry tokens");
  const auto n = static_cast<int>(tokens.size() / kTokensPerFace);
  nn::Tape tape;
  nn::Var dec = decoder_(tape, tape.constant(embed_tokens(tokens, codebook_)), {{0, n}});
  GeometryPrediction out;
  out.coord_logits = nn::reshape(coord_head_(tape, dec), 9 * n, kGridResolution).value();
  out.junction_prob = junction_head_(tape, dec).value().col(0).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return out;
}

IndexedMesh GeometryCodec::reconstruct(const GeometryPrediction& prediction) {
  const std::vector<int> bins = argmax_rows(prediction.coord_logits);
  IndexedMesh soup;
  for (int f = 0; f < prediction.face_count(); ++f) {
    Face face;
    for (int c = 0; c < 3; ++c) {
      QuantizedCoord q;
      for (int a = 0; a < 3; ++a) q.bin[a] = bins[static_cast<std::size_t>(9 * f + 3 * c + a)];
      face[c] = static_cast<int>(soup.vertices.size());
      soup.vertices.push_back(dequantize(q));
    }
    soup.faces.push_back(face);
  }
  return merge_close_vertices(soup);
}

std::vector<double> GeometryCodec::part_feature(const IndexedMesh& mesh) const {
  HIERMESH_CHECK(trained_steps_ > 0 && codebook_.initialized(), ErrorKind::kState,
                 "part features need a trained geometry codec");
  const GeometryExample ex = bare_example(mesh);
  nn::Tape tape;
  const Matrix f = forward({&ex}, tape, nullptr).features;
  return {f.data(), f.data() + f.size()};
}

GeometryLossBreakdown GeometryCodec::loss(const GeometryPrediction& prediction, const GeometryExample& example) const {
  nn::Tape tape;
  GeometryLossBreakdown out;
  out.coords = nn::cross_entropy(tape.constant(prediction.coord_logits), example.bins).scalar();
  Matrix logits(prediction.face_count(), 1);
  for (int f = 0; f < prediction.face_count(); ++f) {
    const double p = std::clamp(prediction.junction_prob(f), 1e-15, 1.0 - 1e-15);
    logits(f, 0) = std::log(p / (1.0 - p));
  }
  out.junction = nn::bce_with_logits(tape.constant(logits), example.junction).scalar();
  out.total = config_.weights.coords * out.coords + config_.weights.junction * out.junction;
  return out;
}

void GeometryCodec::save(const std::filesystem::path& path, const nn::Adam* optimizer) const {
  detail::json meta = {{"kind", "geometry-codec"},
                       {"shape", detail::shape_to_json(config_.shape)},
                       {"weights",
                        {{"coords", config_.weights.coords},
                         {"junction", config_.weights.junction},
                         {"commitment", config_.weights.commitment},
                         {"feature", config_.weights.feature}}},
                       {"junction_threshold", config_.junction_threshold},
                       {"trained_steps", trained_steps_},
                       {"optimizer_steps", optimizer ? optimizer->steps() : 0}};
  nn::Checkpoint ck;
  ck.metadata = meta.dump();
  nn::add_parameters(ck, store_);
  if (optimizer) optimizer->export_state(ck.tensors, "adam/");
  nn::write_checkpoint(path, ck);
}

GeometryCodec GeometryCodec::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "geometry-codec");
  GeometryCodecConfig config;
  try {
    config.shape = detail::shape_from_json(meta.at("shape"));
    const auto& w = meta.at("weights");
    config.weights = {w.at("coords").get<double>(), w.at("junction").get<double>(), w.at("commitment").get<double>(),
                      w.at("feature").get<double>()};
    config.junction_threshold = meta.at("junction_threshold").get<double>();
  } catch (const detail::json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  GeometryCodec codec(config);
  nn::load_parameters(codec.store_, ck);
  codec.trained_steps_ = meta.value("trained_steps", std::int64_t{0});
  return codec;
}

void GeometryCodec::load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "geometry-codec");
  optimizer.import_state(ck.tensors, "adam/", meta.value("optimizer_steps", std::int64_t{0}));
}

CodecTrainStats train_geometry_codec(GeometryCodec& codec, nn::Adam& optimizer,
                                     const std::vector<GeometryExample>& examples, const CodecTrainConfig& config) {
  HIERMESH_CHECK(!examples.empty(), ErrorKind::kValidation, "empty training set");
  codec.codebook().set_update_schedule(config.ema_decay, config.dead_threshold, config.dead_window);
  optimizer.config().lr = config.lr;
  optimizer.config().clip_norm = config.clip_norm;

  CodecTrainStats stats;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t step = codec.trained_steps(); step < config.steps; ++step) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(step)));
    const std::vector<int> picks = detail::pick_batch(static_cast<int>(examples.size()), config.batch, rng);
    std::vector<const GeometryExample*> batch;
    for (int i : picks) batch.push_back(&examples[static_cast<std::size_t>(i)]);
    nn::Tape tape;
    nn::Var loss;
    GeometryCodec::Forward fwd = codec.forward(batch, tape, &loss);
    tape.backward(loss);
    optimizer.step();
    codec.codebook().update(fwd.rq, rng);
    codec.set_trained_steps(step + 1);
    stats.loss_history.push_back(fwd.loss.total);
    stats.final_loss = fwd.loss.total;
    if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
      std::fprintf(stderr, "geometry-codec step %lld loss %.5f (coords %.4f junction %.4f commit %.5f) codes %d\n",
                   static_cast<long long>(step + 1), fwd.loss.total, fwd.loss.coords, fwd.loss.junction,
                   fwd.loss.commitment, codec.codebook().active_codes());
    }
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

GeometryEval evaluate_geometry_codec(const GeometryCodec& codec, const std::vector<GeometryExample>& examples,
                                     int chamfer_points_per_unit_area) {
  GeometryEval out;
  std::size_t hits = 0;
  std::size_t coords = 0;
  std::vector<double> scores;
  std::vector<double> labels;
  double chamfer_total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const GeometryExample& ex = examples[i];
    nn::Tape tape;
    const GeometryCodec::Forward fwd = codec.forward({&ex}, tape, nullptr);
    const std::vector<int> pred = argmax_rows(fwd.prediction.coord_logits);
    for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == ex.bins[k];
    coords += pred.size();
    for (int f = 0; f < fwd.prediction.face_count(); ++f) {
      scores.push_back(fwd.prediction.junction_prob(f));
      labels.push_back(ex.junction[static_cast<std::size_t>(f)]);
    }
    const FaceResiduals res = face_residuals(fwd.rq, fwd.layout);
    for (Eigen::Index f = 0; f < res.depth1.size(); ++f) {
      const double ratio = res.depth1(f) > 0.0 ? res.depth2(f) / res.depth1(f) : (res.depth2(f) > 0.0 ? 2.0 : 0.0);
      out.max_depth_ratio = std::max(out.max_depth_ratio, ratio);
    }
    out.faces += fwd.prediction.face_count();
    if (chamfer_points_per_unit_area > 0) {
      const IndexedMesh rebuilt = GeometryCodec::reconstruct(codec.decode(fwd.tokens));
      if (rebuilt.faces.empty() || surface_area(rebuilt) <= 0.0) {
        chamfer_total += 1.0;
      } else {
        const auto n = static_cast<std::size_t>(
            std::clamp(surface_area(ex.mesh) * chamfer_points_per_unit_area, 2048.0, 200000.0));
        chamfer_total += mesh_chamfer(rebuilt, ex.mesh, n, mix_seed(17, i));
      }
    }
  }
  out.bin_accuracy = coords ? static_cast<double>(hits) / static_cast<double>(coords) : 0.0;
  const bool both = std::count(labels.begin(), labels.end(), 1.0) > 0 && std::count(labels.begin(), labels.end(), 0.0) > 0;
  out.junction_auc = both ? roc_auc(scores, labels) : 1.0;
  out.mean_chamfer = examples.empty() ? 0.0 : chamfer_total / static_cast<double>(examples.size());
  return out;
}

}  // namespace hiermesh
