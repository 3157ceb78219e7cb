#include "hiermesh/structure_codec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "codec_io.hpp"
#include "hiermesh/articulation.hpp"
#include "hiermesh/error.hpp"

namespace hiermesh {

std::string decode_semantic_label(const Vector& feature, const LabelTable& table) {
  const Matrix& e = table.embeddings();
  HIERMESH_CHECK(e.rows() > 0, ErrorKind::kValidation, "empty label table");
  HIERMESH_CHECK(feature.size() == e.cols(), ErrorKind::kShape, "label feature width mismatch");
  const double norm = feature.norm();
  // Labels are alphabetical, so keeping the first maximum breaks ties alphabetically.
  Eigen::Index best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    const double denom = norm * e.row(i).norm();
    const double c = denom > 0.0 ? e.row(i).dot(feature) / denom : 0.0;
    if (c > best_cos) {
      best_cos = c;
      best = i;
    }
  }
  return table.labels()[static_cast<std::size_t>(best)];
}

void attach_geometry_features(ObjectRecord& record, const GeometryCodec& codec) {
  for (PartRecord& p : record.parts) {
    if (!p.geometry_feature) p.geometry_feature = codec.part_feature(p.mesh);
  }
}

struct StructureCodec::Heads {
  nn::Var coords;
  nn::Var type;
  nn::Var exists;
  nn::Var location;
  nn::Var orientation;
  nn::Var label;
  nn::Var geometry;
};

StructureCodec::StructureCodec(const StructureCodecConfig& config, std::uint64_t seed)
    : StructureCodec(config, Rng(mix_seed(seed, fnv1a("structure-codec")))) {}

StructureCodec::StructureCodec(const StructureCodecConfig& config, Rng rng)
    : config_(config),
      codebook_(store_, "codebook", CodebookConfig{config.shape.codebook_size, config.shape.code_dim}),
      encoder_(store_, "encoder", kStructureInputWidth, config.shape, rng),
      decoder_(store_, "decoder", config.shape, rng),
      coord_head_(store_, "head.coords", config.shape.width, 9 * kGridResolution, rng),
      type_head_(store_, "head.type", config.shape.width, kJointTypeCount, rng),
      exists_head_(store_, "head.exists", config.shape.width, 2, rng),
      location_head_(store_, "head.location", config.shape.width, 3 * kGridResolution, rng),
      orientation_head_(store_, "head.orientation", config.shape.width, 3, rng),
      label_head_(store_, "head.label", config.shape.width, kLabelFeatureDim, rng),
      geometry_head_(store_, "head.geometry", config.shape.width, kGeometryFeatureDim, rng) {}

StructureCodec::Heads StructureCodec::heads(nn::Tape& tape, nn::Var decoded,
                                            const std::shared_ptr<const nn::Groups>& parts, int faces) const {
  Heads h;
  h.coords = nn::reshape(coord_head_(tape, decoded), 9 * faces, kGridResolution);
  // Heads are affine, so averaging decoder rows first equals averaging per-face outputs.
  nn::Var pooled = nn::aggregate_mean(decoded, parts);
  const int n = static_cast<int>(parts->size());
  h.type = type_head_(tape, pooled);
  h.exists = exists_head_(tape, pooled);
  h.location = nn::reshape(location_head_(tape, pooled), 3 * n, kGridResolution);
  h.orientation = orientation_head_(tape, pooled);
  h.label = label_head_(tape, pooled);
  h.geometry = geometry_head_(tape, pooled);
  return h;
}

namespace {

std::shared_ptr<nn::Groups> part_groups(int parts, int first_row = 0) {
  auto groups = std::make_shared<nn::Groups>();
  for (int p = 0; p < parts; ++p) {
    std::vector<int> rows(kFacesPerBox);
    std::iota(rows.begin(), rows.end(), first_row + p * kFacesPerBox);
    groups->push_back(std::move(rows));
  }
  return groups;
}

StructurePrediction to_prediction(const auto& h) {
  StructurePrediction p;
  p.coord_logits = h.coords.value();
  p.type_logits = h.type.value();
  p.exists_logits = h.exists.value();
  p.location_logits = h.location.value();
  p.orientation = h.orientation.value();
  p.label = h.label.value();
  p.geometry = h.geometry.value();
  return p;
}

struct Targets {
  std::vector<int> bins;
  std::vector<int> type;
  std::vector<int> exists;
  std::vector<int> location;
  Matrix orientation;
  Matrix label;
  Matrix geometry;
};

Targets gather_targets(const std::vector<const StructureSequence*>& batch) {
  Targets t;
  int parts = 0;
  for (const StructureSequence* s : batch) parts += s->part_count;
  t.orientation.resize(parts, 3);
  t.label.resize(parts, kLabelFeatureDim);
  t.geometry.resize(parts, kGeometryFeatureDim);
  int row = 0;
  for (const StructureSequence* s : batch) {
    for (const FaceBins& b : s->bins) t.bins.insert(t.bins.end(), b.begin(), b.end());
    t.type.insert(t.type.end(), s->joint_type.begin(), s->joint_type.end());
    t.exists.insert(t.exists.end(), s->exists.begin(), s->exists.end());
    for (const auto& loc : s->joint_location_bins) t.location.insert(t.location.end(), loc.begin(), loc.end());
    t.orientation.middleRows(row, s->part_count) = s->orientation;
    t.label.middleRows(row, s->part_count) = s->label_target;
    t.geometry.middleRows(row, s->part_count) = s->geometry_target;
    row += s->part_count;
  }
  return t;
}

}  // namespace

StructureCodec::Forward StructureCodec::forward(const std::vector<const StructureSequence*>& batch, nn::Tape& tape,
                                                nn::Var* loss_var) const {
  HIERMESH_CHECK(!batch.empty(), ErrorKind::kValidation, "empty structure batch");
  Forward out;
  int faces = 0;
  int parts = 0;
  for (const StructureSequence* s : batch) {
    HIERMESH_CHECK(s->part_count > 0, ErrorKind::kValidation, "structure sequence without parts");
    out.layout.append(s->faces.mesh);
    out.part_offsets.push_back(parts);
    faces += s->part_count * kFacesPerBox;
    parts += s->part_count;
  }
  Matrix input(faces, kStructureInputWidth);
  int row = 0;
  for (const StructureSequence* s : batch) {
    const Eigen::Index n = s->geometric.rows();
    input.block(row, 0, n, kGeometricFeatureWidth) = s->geometric;
    input.block(row, kGeometricFeatureWidth, n, kLabelFeatureDim) = s->label;
    input.block(row, kGeometricFeatureWidth + kLabelFeatureDim, n, kGeometryFeatureDim) = s->geometry;
    input.block(row, kGeometricFeatureWidth + kLabelFeatureDim + kGeometryFeatureDim, n, kArticulationFeatureWidth) =
        s->articulation;
    row += static_cast<int>(n);
  }

  const auto neighborhoods = nn::neighborhoods_with_self(out.layout.adjacency);
  nn::Var hidden = encoder_.hidden(tape, tape.constant(std::move(input)), neighborhoods);
  QuantizedFaces q = quantize_faces(tape, encoder_.slots(tape, hidden), out.layout, codebook_);
  nn::Var dec = decoder_(tape, q.face_codes, out.layout.segments);
  const Heads h = heads(tape, dec, part_groups(parts), faces);

  const Targets t = gather_targets(batch);
  nn::Var l_coords = nn::cross_entropy(h.coords, t.bins);
  nn::Var l_type = nn::cross_entropy(h.type, t.type);
  nn::Var l_exists = nn::cross_entropy(h.exists, t.exists);
  nn::Var l_location = nn::cross_entropy(h.location, t.location);
  nn::Var l_orientation = nn::l2_rows(h.orientation, tape.constant(t.orientation));
  nn::Var l_label = nn::l2_rows(h.label, tape.constant(t.label));
  nn::Var l_geometry = nn::l2_rows(h.geometry, tape.constant(t.geometry));

  const StructureLossWeights& w = config_.weights;
  if (loss_var) {
    std::vector<std::pair<nn::Var, double>> terms = {
        {l_coords, w.coords},           {l_type, w.joint_type}, {l_exists, w.exists},
        {l_location, w.location},       {l_orientation, w.orientation}, {l_label, w.label},
        {l_geometry, w.geometry},       {q.commitment, w.commitment}};
    nn::Var total = nn::scale(terms[0].first, terms[0].second);
    for (std::size_t i = 1; i < terms.size(); ++i) total = nn::add(total, nn::scale(terms[i].first, terms[i].second));
    *loss_var = total;
  }
  StructureLossBreakdown& b = out.loss;
  b.coords = l_coords.scalar();
  b.joint_type = l_type.scalar();
  b.exists = l_exists.scalar();
  b.location = l_location.scalar();
  b.orientation = l_orientation.scalar();
  b.label = l_label.scalar();
  b.geometry = l_geometry.scalar();
  b.commitment = q.commitment.scalar();
  b.total = w.coords * b.coords + w.joint_type * b.joint_type + w.exists * b.exists + w.location * b.location +
            w.orientation * b.orientation + w.label * b.label + w.geometry * b.geometry + w.commitment * b.commitment;

  out.prediction = to_prediction(h);
  out.rq = std::move(q.rq);
  out.tokens = std::move(q.tokens);
  return out;
}

Matrix StructureCodec::encode_embeddings(const StructureSequence& seq) const {
  nn::Tape tape;
  FaceLayout layout;
  layout.append(seq.faces.mesh);
  Matrix input(seq.geometric.rows(), kStructureInputWidth);
  input << seq.geometric, seq.label, seq.geometry, seq.articulation;
  return encoder_.hidden(tape, tape.constant(std::move(input)), nn::neighborhoods_with_self(layout.adjacency)).value();
}

std::vector<int> StructureCodec::encode(const StructureSequence& seq) const {
  nn::Tape tape;
  return forward({&seq}, tape, nullptr).tokens;
}

StructurePrediction StructureCodec::decode(const std::vector<int>& tokens) const {
  check_token_length(tokens, kTokensPerPart, "structure tokens");
  const auto faces = static_cast<int>(tokens.size() / kTokensPerFace);
  nn::Tape tape;
  nn::Var dec = decoder_(tape, tape.constant(embed_tokens(tokens, codebook_)), {{0, faces}});
  return to_prediction(heads(tape, dec, part_groups(faces / kFacesPerBox), faces));
}

StructureLossBreakdown StructureCodec::loss(const StructurePrediction& prediction, const StructureSequence& target) const {
  const Targets t = gather_targets({&target});
  nn::Tape tape;
  StructureLossBreakdown b;
  b.coords = nn::cross_entropy(tape.constant(prediction.coord_logits), t.bins).scalar();
  b.joint_type = nn::cross_entropy(tape.constant(prediction.type_logits), t.type).scalar();
  b.exists = nn::cross_entropy(tape.constant(prediction.exists_logits), t.exists).scalar();
  b.location = nn::cross_entropy(tape.constant(prediction.location_logits), t.location).scalar();
  b.orientation = nn::l2_rows(tape.constant(prediction.orientation), tape.constant(t.orientation)).scalar();
  b.label = nn::l2_rows(tape.constant(prediction.label), tape.constant(t.label)).scalar();
  b.geometry = nn::l2_rows(tape.constant(prediction.geometry), tape.constant(t.geometry)).scalar();
  const StructureLossWeights& w = config_.weights;
  b.total = w.coords * b.coords + w.joint_type * b.joint_type + w.exists * b.exists + w.location * b.location +
            w.orientation * b.orientation + w.label * b.label + w.geometry * b.geometry;
  return b;
}

namespace {

detail::json weights_to_json(const StructureLossWeights& w) {
  return {{"coords", w.coords},         {"joint_type", w.joint_type}, {"exists", w.exists},
          {"location", w.location},     {"orientation", w.orientation}, {"label", w.label},
          {"geometry", w.geometry},     {"commitment", w.commitment}};
}

StructureLossWeights weights_from_json(const detail::json& j) {
  StructureLossWeights w;
  w.coords = j.at("coords").get<double>();
  w.joint_type = j.at("joint_type").get<double>();
  w.exists = j.at("exists").get<double>();
  w.location = j.at("location").get<double>();
  w.orientation = j.at("orientation").get<double>();
  w.label = j.at("label").get<double>();
  w.geometry = j.at("geometry").get<double>();
  w.commitment = j.at("commitment").get<double>();
  return w;
}

}  // namespace

void StructureCodec::save(const std::filesystem::path& path, const nn::Adam* optimizer) const {
  const detail::json meta = {{"kind", "structure-codec"},
                             {"shape", detail::shape_to_json(config_.shape)},
                             {"weights", weights_to_json(config_.weights)},
                             {"trained_steps", trained_steps_},
                             {"optimizer_steps", optimizer ? optimizer->steps() : 0}};
  nn::Checkpoint ck;
  ck.metadata = meta.dump();
  nn::add_parameters(ck, store_);
  if (optimizer) optimizer->export_state(ck.tensors, "adam/");
  nn::write_checkpoint(path, ck);
}

StructureCodec StructureCodec::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "structure-codec");
  StructureCodecConfig config;
  try {
    config.shape = detail::shape_from_json(meta.at("shape"));
    config.weights = weights_from_json(meta.at("weights"));
  } catch (const detail::json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  StructureCodec codec(config);
  nn::load_parameters(codec.store_, ck);
  codec.trained_steps_ = meta.value("trained_steps", std::int64_t{0});
  return codec;
}

void StructureCodec::load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "structure-codec");
  optimizer.import_state(ck.tensors, "adam/", meta.value("optimizer_steps", std::int64_t{0}));
}

CodecTrainStats train_structure_codec(StructureCodec& codec, nn::Adam& optimizer,
                                      const std::vector<StructureSequence>& sequences, const CodecTrainConfig& config) {
  HIERMESH_CHECK(!sequences.empty(), ErrorKind::kValidation, "empty training set");
  codec.codebook().set_update_schedule(config.ema_decay, config.dead_threshold, config.dead_window);
  optimizer.config().lr = config.lr;
  optimizer.config().clip_norm = config.clip_norm;

  CodecTrainStats stats;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t step = codec.trained_steps(); step < config.steps; ++step) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(step)));
    std::vector<const StructureSequence*> batch;
    for (int i : detail::pick_batch(static_cast<int>(sequences.size()), config.batch, rng)) {
      batch.push_back(&sequences[static_cast<std::size_t>(i)]);
    }
    nn::Tape tape;
    nn::Var loss;
    StructureCodec::Forward fwd = codec.forward(batch, tape, &loss);
    tape.backward(loss);
    optimizer.step();
    codec.codebook().update(fwd.rq, rng);
    codec.set_trained_steps(step + 1);
    stats.loss_history.push_back(fwd.loss.total);
    stats.final_loss = fwd.loss.total;
    if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
      std::fprintf(stderr, "structure-codec step %lld loss %.5f (coords %.4f type %.4f loc %.4f label %.4f) codes %d\n",
                   static_cast<long long>(step + 1), fwd.loss.total, fwd.loss.coords, fwd.loss.joint_type,
                   fwd.loss.location, fwd.loss.label, codec.codebook().active_codes());
    }
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

StructureEval evaluate_structure_codec(const StructureCodec& codec, const std::vector<StructureSequence>& sequences) {
  StructureEval out;
  std::size_t bin_hits = 0, bins = 0, type_hits = 0, exists_hits = 0, loc_hits = 0, label_hits = 0;
  const auto& labels = LabelTable::standard();
  for (const StructureSequence& seq : sequences) {
    nn::Tape tape;
    const StructureCodec::Forward fwd = codec.forward({&seq}, tape, nullptr);
    const StructurePrediction& p = fwd.prediction;
    const std::vector<int> pred_bins = argmax_rows(p.coord_logits);
    std::size_t k = 0;
    for (const FaceBins& b : seq.bins) {
      for (int v : b) bin_hits += pred_bins[k++] == v;
    }
    bins += pred_bins.size();
    const std::vector<int> types = argmax_rows(p.type_logits);
    const std::vector<int> exists = argmax_rows(p.exists_logits);
    const std::vector<int> locs = argmax_rows(p.location_logits);
    for (int i = 0; i < seq.part_count; ++i) {
      const auto u = static_cast<std::size_t>(i);
      type_hits += types[u] == seq.joint_type[u];
      exists_hits += exists[u] == seq.exists[u];
      for (int a = 0; a < 3; ++a) loc_hits += locs[3 * u + static_cast<std::size_t>(a)] == seq.joint_location_bins[u][static_cast<std::size_t>(a)];
      const Vector label = p.label.row(i).transpose();
      const Vector truth = seq.label_target.row(i).transpose();
      label_hits += decode_semantic_label(label, labels) == decode_semantic_label(truth, labels);
      out.max_orientation_error = std::max(out.max_orientation_error, (p.orientation.row(i) - seq.orientation.row(i)).norm());
    }
    out.parts += seq.part_count;
    const FaceResiduals res = face_residuals(fwd.rq, fwd.layout);
    for (Eigen::Index f = 0; f < res.depth1.size(); ++f) {
      const double ratio = res.depth1(f) > 0.0 ? res.depth2(f) / res.depth1(f) : (res.depth2(f) > 0.0 ? 2.0 : 0.0);
      out.max_depth_ratio = std::max(out.max_depth_ratio, ratio);
    }
  }
  const auto frac = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  const auto parts = static_cast<std::size_t>(out.parts);
  out.bin_accuracy = frac(bin_hits, bins);
  out.joint_type_accuracy = frac(type_hits, parts);
  out.exists_accuracy = frac(exists_hits, parts);
  out.location_accuracy = frac(loc_hits, 3 * parts);
  out.label_accuracy = frac(label_hits, parts);
  return out;
}

namespace {

int median_of(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace

std::vector<DecodedPart> decode_structure_prediction(const StructurePrediction& prediction) {
  const int n = prediction.part_count();
  HIERMESH_CHECK(prediction.coord_logits.rows() == 9 * kFacesPerBox * n, ErrorKind::kShape,
                 "structure prediction shape mismatch");
  const std::vector<int> bins = argmax_rows(prediction.coord_logits);
  const std::vector<int> types = argmax_rows(prediction.type_logits);
  const std::vector<int> exists = argmax_rows(prediction.exists_logits);
  const std::vector<int> locs = argmax_rows(prediction.location_logits);
  const auto& table = LabelTable::standard();

  std::vector<DecodedPart> parts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    DecodedPart& part = parts[static_cast<std::size_t>(i)];
    for (int a = 0; a < 3; ++a) {
      std::vector<int> values;
      for (int f = 0; f < kFacesPerBox; ++f) {
        for (int c = 0; c < 3; ++c) values.push_back(bins[static_cast<std::size_t>(9 * (i * kFacesPerBox + f) + 3 * c + a)]);
      }
      const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
      const double mid = 0.5 * (*lo_it + *hi_it);
      std::vector<int> low;
      std::vector<int> high;
      for (int v : values) (v <= mid ? low : high).push_back(v);
      if (high.empty()) high = low;
      const int lo = median_of(low);
      const int hi = median_of(high);
      for (int v : low) part.spread = std::max(part.spread, std::abs(v - lo));
      for (int v : high) part.spread = std::max(part.spread, std::abs(v - hi));
      part.aabb.min[a] = dequantize_scalar(std::min(lo, hi));
      part.aabb.max[a] = dequantize_scalar(std::max(lo, hi));
    }
    part.degenerate = part.spread > kDegenerateSpreadBins;

    Joint& j = part.joint;
    j.type = static_cast<JointType>(types[static_cast<std::size_t>(i)]);
    j.exists = exists[static_cast<std::size_t>(i)] == 1;
    const Point3 axis = prediction.orientation.row(i).transpose();
    j.orientation = axis.norm() > 1e-9 ? Point3(axis.normalized()) : Point3(Point3::UnitZ());
    for (int a = 0; a < 3; ++a) j.location[a] = dequantize_scalar(locs[static_cast<std::size_t>(3 * i + a)]);
    j.range = j.type == JointType::kRevolute ? kRevoluteRange : 0.0;

    part.label = decode_semantic_label(prediction.label.row(i).transpose(), table);
    part.geometry.assign(prediction.geometry.row(i).data(), prediction.geometry.row(i).data() + kGeometryFeatureDim);
  }

  std::vector<Aabb> boxes;
  std::vector<Joint> joints;
  for (const DecodedPart& p : parts) {
    boxes.push_back(p.aabb);
    joints.push_back(p.joint);
  }
  for (DecodedPart& p : parts) {
    if (p.joint.type != JointType::kPrismatic) continue;
    double range = prismatic_range(boxes, joints, p.joint.orientation);
    if (!(range > 0.0)) range = std::max((p.aabb.max - p.aabb.min).cwiseAbs().dot(p.joint.orientation.cwiseAbs()), 1.0 / kGridResolution);
    p.joint.range = range;
  }
  return parts;
}

std::vector<DecodedPart> decode_structure_sample(const std::vector<int>& tokens, const StructureCodec& codec) {
  return decode_structure_prediction(codec.decode(tokens));
}

}  // namespace hiermesh
