#include "hiermesh/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "codec_io.hpp"
#include "hiermesh/error.hpp"

namespace hiermesh {

using detail::json;

namespace {

json train_to_json(const CodecTrainConfig& c) {
  return {{"steps", c.steps},           {"batch", c.batch},
          {"lr", c.lr},                 {"clip_norm", c.clip_norm},
          {"ema_decay", c.ema_decay},   {"dead_threshold", c.dead_threshold},
          {"dead_window", c.dead_window}, {"seed", c.seed},
          {"log_every", c.log_every}};
}

CodecTrainConfig train_from_json(const json& j) {
  CodecTrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.ema_decay = j.at("ema_decay").get<double>();
  c.dead_threshold = j.at("dead_threshold").get<double>();
  c.dead_window = j.at("dead_window").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.log_every = j.at("log_every").get<int>();
  return c;
}

json train_to_json(const TransformerTrainConfig& c) {
  return {{"steps", c.steps}, {"batch", c.batch}, {"lr", c.lr},
          {"clip_norm", c.clip_norm}, {"seed", c.seed}, {"log_every", c.log_every}};
}

TransformerTrainConfig transformer_train_from_json(const json& j) {
  TransformerTrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.log_every = j.at("log_every").get<int>();
  return c;
}

json model_to_json(const TransformerConfig& c) {
  return {{"codebook_size", c.codebook_size}, {"layers", c.layers}, {"heads", c.heads},
          {"width", c.width}, {"context", c.context}, {"structure_codebook", c.structure_codebook}};
}

TransformerConfig model_from_json(const json& j) {
  TransformerConfig c;
  c.codebook_size = j.at("codebook_size").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.context = j.at("context").get<int>();
  c.structure_codebook = j.at("structure_codebook").get<int>();
  return c;
}

json sampling_json(const SamplingConfig& c) {
  return {{"mode", c.mode == SamplingMode::kBeam ? "beam" : "nucleus"},
          {"beams", c.beams},
          {"top_p", c.top_p},
          {"temperature", c.temperature},
          {"seed", c.seed},
          {"retries", c.retries}};
}

SamplingConfig sampling_from_json(const json& j) {
  SamplingConfig c;
  const std::string mode = j.at("mode").get<std::string>();
  HIERMESH_CHECK(mode == "beam" || mode == "nucleus", ErrorKind::kSchema, "sampling mode must be beam or nucleus");
  c.mode = mode == "beam" ? SamplingMode::kBeam : SamplingMode::kNucleus;
  c.beams = j.at("beams").get<int>();
  c.top_p = j.at("top_p").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.retries = j.at("retries").get<int>();
  return c;
}

json to_json_tree(const RunConfig& c) {
  const auto& sc = c.structure_codec.model;
  const auto& gc = c.geometry_codec.model;
  const auto& sw = sc.weights;
  const auto& gw = gc.weights;
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"constants",
       {{"grid", c.constants.grid},
        {"tokens_per_face", c.constants.tokens_per_face},
        {"rq_depth", c.constants.rq_depth},
        {"revolute_range", c.constants.revolute_range}}},
      {"paths",
       {{"dataset", c.paths.dataset},
        {"tokens", c.paths.tokens},
        {"checkpoints", c.paths.checkpoints},
        {"output", c.paths.output}}},
      {"dataset",
       {{"categories", c.dataset.categories},
        {"count", c.dataset.count},
        {"seed", c.dataset.seed},
        {"max_faces", c.dataset.max_faces},
        {"augment_copies", c.dataset.augment_copies},
        {"shift_range", c.dataset.augment.shift_range},
        {"scale_range", {c.dataset.augment.scale_range.first, c.dataset.augment.scale_range.second}}}},
      {"structure_codec",
       {{"shape", detail::shape_to_json(sc.shape)},
        {"weights",
         {{"coords", sw.coords},
          {"joint_type", sw.joint_type},
          {"exists", sw.exists},
          {"location", sw.location},
          {"orientation", sw.orientation},
          {"label", sw.label},
          {"geometry", sw.geometry},
          {"commitment", sw.commitment}}},
        {"train", train_to_json(c.structure_codec.train)}}},
      {"geometry_codec",
       {{"shape", detail::shape_to_json(gc.shape)},
        {"weights",
         {{"coords", gw.coords}, {"junction", gw.junction}, {"commitment", gw.commitment}, {"feature", gw.feature}}},
        {"junction_threshold", gc.junction_threshold},
        {"train", train_to_json(c.geometry_codec.train)}}},
      {"structure_transformer",
       {{"model", model_to_json(c.structure_transformer.model)},
        {"train", train_to_json(c.structure_transformer.train)}}},
      {"geometry_transformer",
       {{"model", model_to_json(c.geometry_transformer.model)},
        {"train", train_to_json(c.geometry_transformer.train)}}},
      {"generation",
       {{"structure_sampling", sampling_json(c.generation.structure_sampling)},
        {"geometry_sampling", sampling_json(c.generation.geometry_sampling)},
        {"junction_probability", c.generation.junction_probability},
        {"dilation", c.generation.dilation},
        {"max_part_faces", c.generation.max_part_faces},
        {"category", c.generation.category}}},
      {"metrics",
       {{"states", c.metrics.instantiation.states},
        {"points", c.metrics.instantiation.points},
        {"seed", c.metrics.instantiation.seed},
        {"cloud_points", c.metrics.cloud_points},
        {"seeds", c.metrics.seeds}}},
  };
}

RunConfig from_json_tree(const json& j) {
  RunConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& k = j.at("constants");
  c.constants.grid = k.at("grid").get<int>();
  c.constants.tokens_per_face = k.at("tokens_per_face").get<int>();
  c.constants.rq_depth = k.at("rq_depth").get<int>();
  c.constants.revolute_range = k.at("revolute_range").get<double>();
  const json& p = j.at("paths");
  c.paths = {p.at("dataset").get<std::string>(), p.at("tokens").get<std::string>(),
             p.at("checkpoints").get<std::string>(), p.at("output").get<std::string>()};
  const json& d = j.at("dataset");
  c.dataset.categories = d.at("categories").get<std::vector<std::string>>();
  c.dataset.count = d.at("count").get<int>();
  c.dataset.seed = d.at("seed").get<std::uint64_t>();
  c.dataset.max_faces = d.at("max_faces").get<int>();
  c.dataset.augment_copies = d.at("augment_copies").get<int>();
  c.dataset.augment.shift_range = d.at("shift_range").get<double>();
  const auto sr = d.at("scale_range").get<std::vector<double>>();
  HIERMESH_CHECK(sr.size() == 2, ErrorKind::kSchema, "scale_range needs two values");
  c.dataset.augment.scale_range = {sr[0], sr[1]};

  const json& s = j.at("structure_codec");
  c.structure_codec.model.shape = detail::shape_from_json(s.at("shape"));
  const json& sw = s.at("weights");
  auto& w = c.structure_codec.model.weights;
  w.coords = sw.at("coords").get<double>();
  w.joint_type = sw.at("joint_type").get<double>();
  w.exists = sw.at("exists").get<double>();
  w.location = sw.at("location").get<double>();
  w.orientation = sw.at("orientation").get<double>();
  w.label = sw.at("label").get<double>();
  w.geometry = sw.at("geometry").get<double>();
  w.commitment = sw.at("commitment").get<double>();
  c.structure_codec.train = train_from_json(s.at("train"));

  const json& g = j.at("geometry_codec");
  c.geometry_codec.model.shape = detail::shape_from_json(g.at("shape"));
  const json& gw = g.at("weights");
  c.geometry_codec.model.weights = {gw.at("coords").get<double>(), gw.at("junction").get<double>(),
                                    gw.at("commitment").get<double>(), gw.at("feature").get<double>()};
  c.geometry_codec.model.junction_threshold = g.at("junction_threshold").get<double>();
  c.geometry_codec.train = train_from_json(g.at("train"));

  c.structure_transformer.model = model_from_json(j.at("structure_transformer").at("model"));
  c.structure_transformer.train = transformer_train_from_json(j.at("structure_transformer").at("train"));
  c.geometry_transformer.model = model_from_json(j.at("geometry_transformer").at("model"));
  c.geometry_transformer.train = transformer_train_from_json(j.at("geometry_transformer").at("train"));

  const json& gen = j.at("generation");
  c.generation.structure_sampling = sampling_from_json(gen.at("structure_sampling"));
  c.generation.geometry_sampling = sampling_from_json(gen.at("geometry_sampling"));
  c.generation.junction_probability = gen.at("junction_probability").get<double>();
  c.generation.dilation = gen.at("dilation").get<double>();
  c.generation.max_part_faces = gen.at("max_part_faces").get<int>();
  c.generation.category = gen.at("category").get<std::string>();

  const json& m = j.at("metrics");
  c.metrics.instantiation.states = m.at("states").get<int>();
  c.metrics.instantiation.points = m.at("points").get<std::size_t>();
  c.metrics.instantiation.seed = m.at("seed").get<std::uint64_t>();
  c.metrics.cloud_points = m.at("cloud_points").get<std::size_t>();
  c.metrics.seeds = m.at("seeds").get<int>();
  return c;
}

// Overlays `patch` onto `base`; every key of patch must already exist in base.
void overlay(json& base, const json& patch, const std::string& where) {
  HIERMESH_CHECK(patch.is_object(), ErrorKind::kSchema, where + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    HIERMESH_CHECK(base.contains(it.key()), ErrorKind::kSchema, "unknown config key " + path);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), path);
    } else {
      slot = it.value();
    }
  }
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParse, std::string(what) + ": " + e.what());
  }
}

void check_transformer(const TransformerStage& s, const char* name) {
  const std::string n = name;
  const auto& m = s.model;
  HIERMESH_CHECK(m.codebook_size > 0, ErrorKind::kConfig, n + ": codebook_size must be positive");
  HIERMESH_CHECK(m.layers > 0 && m.heads > 0 && m.width > 0, ErrorKind::kConfig, n + ": empty model");
  HIERMESH_CHECK(m.width % m.heads == 0, ErrorKind::kConfig, n + ": width must divide into heads");
  HIERMESH_CHECK(s.train.steps >= 0 && s.train.lr > 0.0, ErrorKind::kConfig, n + ": bad training schedule");
}

void check_codec(const CodecShape& shape, const CodecTrainConfig& train, const char* name) {
  const std::string n = name;
  HIERMESH_CHECK(shape.codebook_size > 1 && shape.code_dim > 0 && shape.width > 0, ErrorKind::kConfig,
                 n + ": codebook and widths must be positive");
  HIERMESH_CHECK(shape.encoder_layers > 0 && shape.decoder_blocks >= 0, ErrorKind::kConfig, n + ": bad layer counts");
  HIERMESH_CHECK(train.steps >= 0 && train.lr > 0.0 && train.ema_decay > 0.0 && train.ema_decay < 1.0,
                 ErrorKind::kConfig, n + ": bad training schedule");
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"tiny", "desk", "paper"};
  return names;
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  auto& sc = c.structure_codec;
  auto& gc = c.geometry_codec;
  auto& st = c.structure_transformer;
  auto& gt = c.geometry_transformer;
  if (name == "desk") {
    sc.model.shape = {512, 64, 192, 4, 2};
    gc.model.shape = {512, 64, 192, 4, 2};
    st.model = {512, 4, 4, 128, 1024, 0};
    gt.model = {512, 6, 4, 192, 2048, 512};
  } else if (name == "paper") {
    sc.model.shape = {8192, 192, 768, 4, 2};
    gc.model.shape = {16384, 192, 768, 4, 2};
    st.model = {8192, 12, 12, 768, 4608, 0};
    gt.model = {16384, 24, 16, 1024, 4608, 8192};
  } else if (name == "tiny") {
    c.dataset.count = 8;
    sc.model.shape = {512, 32, 128, 4, 2};
    gc.model.shape = {512, 32, 128, 4, 2};
    sc.train.steps = 1200;
    gc.train.steps = 600;
    for (CodecTrainConfig* t : {&sc.train, &gc.train}) {
      t->batch = 0;
      t->lr = 2e-3;
      t->dead_window = 50;
    }
    st.model = {512, 2, 4, 64, 1024, 0};
    gt.model = {512, 2, 4, 64, 1024, 512};
    c.generation.max_part_faces = 100;
    for (TransformerTrainConfig* t : {&st.train, &gt.train}) {
      t->steps = 300;
      t->batch = 0;
      t->lr = 3e-3;
    }
  } else {
    throw Error(ErrorKind::kConfig, "unknown preset " + std::string(name));
  }
  st.train.seed = 1;
  gt.train.seed = 2;
  return c;
}

void validate(const RunConfig& c) {
  bool known = false;
  for (const auto& n : preset_names()) known = known || n == c.preset;
  HIERMESH_CHECK(known, ErrorKind::kConfig, "unknown preset " + c.preset);
  const ModelConstants compiled;
  HIERMESH_CHECK(c.constants.grid == compiled.grid && c.constants.tokens_per_face == compiled.tokens_per_face &&
                     c.constants.rq_depth == compiled.rq_depth &&
                     std::abs(c.constants.revolute_range - compiled.revolute_range) < 1e-12,
                 ErrorKind::kConfig, "constants differ from the compiled grid, token and joint constants");
  HIERMESH_CHECK(!c.dataset.categories.empty(), ErrorKind::kConfig, "dataset needs a category");
  for (const auto& cat : c.dataset.categories) {
    bool ok = false;
    for (const auto& k : category_set()) ok = ok || k == cat;
    HIERMESH_CHECK(ok, ErrorKind::kConfig, "unknown category " + cat);
  }
  HIERMESH_CHECK(c.dataset.count > 0 && c.dataset.max_faces > 0 && c.dataset.augment_copies >= 0, ErrorKind::kConfig,
                 "dataset counts must be positive");
  HIERMESH_CHECK(c.dataset.augment.shift_range >= 0.0 && c.dataset.augment.scale_range.first > 0.0 &&
                     c.dataset.augment.scale_range.first <= c.dataset.augment.scale_range.second,
                 ErrorKind::kConfig, "bad augmentation ranges");
  check_codec(c.structure_codec.model.shape, c.structure_codec.train, "structure_codec");
  check_codec(c.geometry_codec.model.shape, c.geometry_codec.train, "geometry_codec");
  HIERMESH_CHECK(c.geometry_codec.model.junction_threshold > 0.0, ErrorKind::kConfig,
                 "junction_threshold must be positive");
  check_transformer(c.structure_transformer, "structure_transformer");
  check_transformer(c.geometry_transformer, "geometry_transformer");
  HIERMESH_CHECK(c.structure_transformer.model.codebook_size == c.structure_codec.model.shape.codebook_size,
                 ErrorKind::kConfig, "structure_transformer codebook differs from the structure codec");
  HIERMESH_CHECK(c.geometry_transformer.model.codebook_size == c.geometry_codec.model.shape.codebook_size,
                 ErrorKind::kConfig, "geometry_transformer codebook differs from the geometry codec");
  HIERMESH_CHECK(c.geometry_transformer.model.structure_codebook == c.structure_codec.model.shape.codebook_size,
                 ErrorKind::kConfig, "geometry_transformer structure_codebook differs from the structure codec");
  HIERMESH_CHECK(c.structure_transformer.model.context >= kTokensPerPart + 2, ErrorKind::kConfig,
                 "structure_transformer context cannot hold one part");
  HIERMESH_CHECK(c.geometry_transformer.model.context >= kTokensPerPart + kTokensPerFace + 2, ErrorKind::kConfig,
                 "geometry_transformer context cannot hold a condition and one face");
  validate(c.generation.structure_sampling);
  validate(c.generation.geometry_sampling);
  HIERMESH_CHECK(c.generation.junction_probability >= 0.0 && c.generation.junction_probability < 1.0 &&
                     c.generation.dilation >= 0.0 && c.generation.max_part_faces > 0,
                 ErrorKind::kConfig, "bad generation settings");
  HIERMESH_CHECK(kTokensPerPart + kTokensPerFace * (c.generation.max_part_faces + 1) + 2 <=
                     c.geometry_transformer.model.context,
                 ErrorKind::kConfig, "max_part_faces leaves no room for junction faces in the geometry context");
  bool cat_ok = false;
  for (const auto& k : category_set()) cat_ok = cat_ok || k == c.generation.category;
  HIERMESH_CHECK(cat_ok, ErrorKind::kConfig, "unknown generation category " + c.generation.category);
  HIERMESH_CHECK(c.metrics.instantiation.states >= 2 && c.metrics.instantiation.points > 0 &&
                     c.metrics.cloud_points > 0 && c.metrics.seeds > 0,
                 ErrorKind::kConfig, "bad metrics settings");
}

std::string to_json(const RunConfig& config) { return to_json_tree(config).dump(2); }

RunConfig parse_run_config(std::string_view text) {
  const json patch = parse_json(text, "run config");
  HIERMESH_CHECK(patch.is_object(), ErrorKind::kSchema, "run config must be an object");
  std::string preset = "desk";
  if (patch.contains("preset")) {
    HIERMESH_CHECK(patch["preset"].is_string(), ErrorKind::kSchema, "preset must be a string");
    preset = patch["preset"].get<std::string>();
  }
  json tree = to_json_tree(preset_config(preset));
  overlay(tree, patch, "");
  RunConfig c;
  try {
    c = from_json_tree(tree);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("run config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string config_hash(const RunConfig& config) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json_tree(config).dump())));
  return hex;
}

SamplingConfig parse_sampling_config(std::string_view text) {
  json tree = sampling_json(SamplingConfig{});
  overlay(tree, parse_json(text, "sampling config"), "");
  SamplingConfig c;
  try {
    c = sampling_from_json(tree);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("sampling config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string to_json(const SamplingConfig& config) { return sampling_json(config).dump(2); }

}  // namespace hiermesh
