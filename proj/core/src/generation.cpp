#include "hiermesh/generation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "codec_io.hpp"
#include "hiermesh/error.hpp"

namespace hiermesh {

namespace {

bool corner_less(const Point3& a, const Point3& b) {
  if (a.z() != b.z()) return a.z() < b.z();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.x() < b.x();
}

std::array<Point3, 3> sorted_corners(const JunctionFace& f) {
  std::array<Point3, 3> c = f.corners;
  std::sort(c.begin(), c.end(), corner_less);
  return c;
}

bool face_less(const JunctionFace& a, const JunctionFace& b) {
  const auto ca = sorted_corners(a);
  const auto cb = sorted_corners(b);
  for (int k = 0; k < 3; ++k) {
    if (corner_less(ca[k], cb[k])) return true;
    if (corner_less(cb[k], ca[k])) return false;
  }
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.source_part < b.source_part;
}

JunctionFace face_from_bins(const FaceBins& bins, const int* tokens, int part) {
  JunctionFace f;
  for (int c = 0; c < 3; ++c) {
    QuantizedCoord q;
    for (int a = 0; a < 3; ++a) q.bin[a] = bins[static_cast<std::size_t>(3 * c + a)];
    f.corners[c] = dequantize(q);
  }
  std::copy(tokens, tokens + kTokensPerFace, f.tokens.begin());
  f.source_part = part;
  return f;
}

Aabb snap_box(const Aabb& box) {
  Aabb out;
  out.min = dequantize(quantize(box.min));
  out.max = dequantize(quantize(box.max));
  return out;
}

}  // namespace

bool JunctionCache::insert(const JunctionFace& face, double probability) {
  if (!(probability > threshold_)) return false;
  faces_.push_back(face);
  return true;
}

int JunctionCache::insert_part(const std::vector<int>& tokens, const GeometryPrediction& prediction, int part) {
  check_token_length(tokens, kTokensPerFace, "geometry tokens");
  HIERMESH_CHECK(static_cast<int>(tokens.size()) == kTokensPerFace * prediction.face_count(), ErrorKind::kShape,
                 "tokens and prediction disagree on the face count");
  const std::vector<int> bins = argmax_rows(prediction.coord_logits);
  int added = 0;
  for (int f = 0; f < prediction.face_count(); ++f) {
    FaceBins b;
    std::copy_n(bins.begin() + 9 * f, 9, b.begin());
    added += insert(face_from_bins(b, tokens.data() + kTokensPerFace * f, part), prediction.junction_prob(f));
  }
  return added;
}

std::vector<JunctionFace> JunctionCache::retrieve(const Aabb& box, double rho) const {
  const Aabb region = box.dilated(rho);
  std::vector<JunctionFace> out;
  for (const JunctionFace& f : faces_) {
    const Point3 c = f.centroid();
    if ((c.array() >= region.min.array()).all() && (c.array() <= region.max.array()).all()) out.push_back(f);
  }
  std::sort(out.begin(), out.end(), face_less);
  return out;
}

TransformerExample assemble_geometry_prefix(int part, const std::vector<int>& structure,
                                            std::vector<JunctionFace> junction, const Aabb& box, int context,
                                            int reserve) {
  HIERMESH_CHECK(part >= 0 && static_cast<int>(structure.size()) >= kTokensPerPart * (part + 1), ErrorKind::kStructural,
                 "part " + std::to_string(part) + " has no structure tokens");
  const int budget = context - kTokensPerPart - reserve;
  HIERMESH_CHECK(budget >= 0, ErrorKind::kStructural, "structure condition and mesh do not fit in the context");
  const auto max_faces = static_cast<std::size_t>(budget / kTokensPerFace);
  if (junction.size() > max_faces) {
    // Drop the farthest faces, keep the survivors in canonical order.
    const Point3 center = box.center();
    std::vector<std::size_t> idx(junction.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return (junction[a].centroid() - center).norm() < (junction[b].centroid() - center).norm();
    });
    idx.resize(max_faces);
    std::sort(idx.begin(), idx.end());
    std::vector<JunctionFace> kept;
    for (std::size_t i : idx) kept.push_back(junction[i]);
    junction = std::move(kept);
  }
  TransformerExample e;
  e.structure = structure;
  e.part = part;
  for (const JunctionFace& f : junction) e.junction.insert(e.junction.end(), f.tokens.begin(), f.tokens.end());
  return e;
}

TokenizedObject tokenize_object(const ObjectRecord& record, const StructureCodec& structure,
                                const GeometryCodec& geometry, double junction_threshold) {
  TokenizedObject out;
  out.object_id = record.object_id;
  out.structure = structure.encode(build_structure_sequence(record));
  for (const PartRecord& p : record.parts) out.boxes.push_back(snap_box(p.aabb));
  for (const GeometryExample& ex : geometry_examples(record, junction_threshold)) {
    out.part_tokens.push_back(geometry.encode(ex.mesh));
    std::vector<FaceBins> bins(ex.mesh.faces.size());
    for (std::size_t f = 0; f < bins.size(); ++f) std::copy_n(ex.bins.begin() + 9 * f, 9, bins[f].begin());
    out.part_bins.push_back(std::move(bins));
    std::vector<int> flags;
    for (double j : ex.junction) flags.push_back(j > 0.5 ? 1 : 0);
    out.junction.push_back(std::move(flags));
  }
  return out;
}

TransformerExample structure_transformer_example(const TokenizedObject& object) {
  TransformerExample e;
  e.tokens = object.structure;
  return e;
}

std::vector<TransformerExample> geometry_transformer_examples(const TokenizedObject& object, int context, double rho) {
  std::vector<TransformerExample> out;
  JunctionCache cache;
  for (std::size_t i = 0; i < object.part_tokens.size(); ++i) {
    const std::vector<int>& tokens = object.part_tokens[i];
    TransformerExample e = assemble_geometry_prefix(static_cast<int>(i), object.structure, cache.retrieve(object.boxes[i], rho),
                                                    object.boxes[i], context, static_cast<int>(tokens.size()) + 2);
    e.tokens = tokens;
    out.push_back(std::move(e));
    for (std::size_t f = 0; f < object.part_bins[i].size(); ++f) {
      cache.insert(face_from_bins(object.part_bins[i][f], tokens.data() + kTokensPerFace * f, static_cast<int>(i)),
                   object.junction[i][f] ? 1.0 : 0.0);
    }
  }
  return out;
}

void write_token_file(const std::filesystem::path& path, const TokenFile& file) {
  const TokenizedObject& o = file.object;
  detail::json boundaries = detail::json::array();
  for (std::size_t i = 0; i <= o.part_tokens.size(); ++i) boundaries.push_back(i * kTokensPerPart);
  detail::json boxes = detail::json::array();
  for (const Aabb& b : o.boxes) boxes.push_back(detail::aabb_to_json(b));
  detail::json parts = detail::json::array();
  for (std::size_t i = 0; i < o.part_tokens.size(); ++i) {
    detail::json bins = detail::json::array();
    for (const FaceBins& b : o.part_bins[i]) bins.push_back(b);
    parts.push_back({{"part_id", i}, {"tokens", o.part_tokens[i]}, {"bins", bins}, {"junction", o.junction[i]}});
  }
  const detail::json j = {
      {"object_id", o.object_id},
      {"structure",
       {{"codec_hash", file.structure_codec_hash}, {"part_boundaries", boundaries}, {"boxes", boxes}, {"tokens", o.structure}}},
      {"geometry", {{"codec_hash", file.geometry_codec_hash}, {"parts", parts}}}};
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump() << '\n';
}

TokenFile read_token_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  TokenFile file;
  try {
    const detail::json j = detail::json::parse(in);
    TokenizedObject& o = file.object;
    o.object_id = j.at("object_id").get<std::string>();
    const auto& s = j.at("structure");
    file.structure_codec_hash = s.at("codec_hash").get<std::string>();
    o.structure = s.at("tokens").get<std::vector<int>>();
    for (const auto& b : s.at("boxes")) o.boxes.push_back(detail::aabb_from_json(b));
    const auto& g = j.at("geometry");
    file.geometry_codec_hash = g.at("codec_hash").get<std::string>();
    for (const auto& p : g.at("parts")) {
      o.part_tokens.push_back(p.at("tokens").get<std::vector<int>>());
      o.part_bins.push_back(p.at("bins").get<std::vector<FaceBins>>());
      o.junction.push_back(p.at("junction").get<std::vector<int>>());
    }
  } catch (const detail::json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  const TokenizedObject& o = file.object;
  const std::size_t n = o.part_tokens.size();
  HIERMESH_CHECK(o.structure.size() == n * kTokensPerPart && o.boxes.size() == n, ErrorKind::kSchema,
                 path.string() + ": structure and part counts disagree");
  for (std::size_t i = 0; i < n; ++i) {
    HIERMESH_CHECK(o.part_tokens[i].size() == kTokensPerFace * o.part_bins[i].size() &&
                       o.junction[i].size() == o.part_bins[i].size(),
                   ErrorKind::kSchema, path.string() + ": part " + std::to_string(i) + " is inconsistent");
  }
  return file;
}

GenerationResult generate_object(const GenerationModels& models, const GenerationConfig& config, std::uint64_t seed) {
  HIERMESH_CHECK(models.structure_codec && models.geometry_codec && models.structure_transformer &&
                     models.geometry_transformer,
                 ErrorKind::kConfig, "generation needs both codecs and both transformers");
  GenerationResult result;
  GenerationDiagnostic& diag = result.diagnostic;
  auto fail = [&](std::string stage, std::string reason) {
    diag.stage = std::move(stage);
    diag.reason = std::move(reason);
    result.ok = false;
    return result;
  };

  SamplingConfig s_cfg = config.structure_sampling;
  s_cfg.seed = mix_seed(seed, fnv1a("structure"));
  try {
    diag.structure_tokens = sample_sequence(*models.structure_transformer, TransformerExample{}, kTokensPerPart, s_cfg).tokens;
    result.structure = decode_structure_sample(diag.structure_tokens, *models.structure_codec);
  } catch (const Error& e) {
    return fail("structure", e.what());
  }

  const int context = models.geometry_transformer->config().context;
  const int reserve = kTokensPerFace * config.max_part_faces + 2;
  JunctionCache cache(config.junction_probability);
  std::vector<IndexedMesh> meshes;
  for (std::size_t i = 0; i < result.structure.size(); ++i) {
    diag.part = static_cast<int>(i);
    const Aabb& box = result.structure[i].aabb;
    SamplingConfig g_cfg = config.geometry_sampling;
    g_cfg.seed = mix_seed(seed, 1000 + i);
    try {
      const int fit = std::max(0, std::min(reserve, context - kTokensPerPart));
      TransformerExample prefix = assemble_geometry_prefix(static_cast<int>(i), diag.structure_tokens,
                                                           cache.retrieve(box, config.dilation), box, context, fit);
      std::vector<int> tokens = sample_sequence(*models.geometry_transformer, prefix, kTokensPerFace, g_cfg).tokens;
      diag.part_tokens.push_back(tokens);
      const GeometryPrediction prediction = models.geometry_codec->decode(tokens);
      IndexedMesh mesh = GeometryCodec::reconstruct(prediction);
      if (mesh.faces.empty()) return fail("geometry", "part decoded to no faces");
      cache.insert_part(tokens, prediction, static_cast<int>(i));
      meshes.push_back(std::move(mesh));
    } catch (const Error& e) {
      return fail("geometry", e.what());
    }
  }
  diag.part = -1;

  ObjectRecord& record = result.object;
  record.object_id = "generated-" + std::to_string(seed);
  record.category = config.category;
  std::vector<Aabb> boxes;
  for (const IndexedMesh& m : meshes) boxes.push_back(compute_aabb(m));
  for (int i : order_parts(boxes)) {
    const auto u = static_cast<std::size_t>(i);
    PartRecord p;
    p.part_id = static_cast<int>(record.parts.size());
    p.mesh = meshes[u];
    p.aabb = boxes[u];
    p.label = result.structure[u].label;
    p.joint = result.structure[u].joint;
    p.geometry_feature = result.structure[u].geometry;
    record.parts.push_back(std::move(p));
  }
  try {
    validate_object(record);
  } catch (const Error& e) {
    return fail("validate", e.what());
  }
  result.ok = true;
  return result;
}

}  // namespace hiermesh
