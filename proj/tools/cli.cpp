#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiermesh/annotation.hpp"
#include "hiermesh/articulation.hpp"
#include "hiermesh/config.hpp"
#include "hiermesh/dataset.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/generation.hpp"
#include "hiermesh/metrics.hpp"
#include "hiermesh/nn/checkpoint.hpp"
#include "hiermesh/obj_io.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStructureCodecFile = "structure_codec.ckpt";
constexpr const char* kGeometryCodecFile = "geometry_codec.ckpt";
constexpr const char* kStructureTfFile = "structure_tf.ckpt";
constexpr const char* kGeometryTfFile = "geometry_tf.ckpt";
constexpr const char* kTokenSuffix = ".tokens.json";

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string root;
  std::string manifest;
  int log_every = 0;

  std::string category = "storage";
  int count = 16;
  std::string out;
  bool resume = false;
  std::string object;
  double t = 0.0;
  int states = 0;
  std::string gen;
  std::string ref;
  bool articulated = false;
  std::string sampling_path;
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Everything a subcommand needs besides its own flags.
struct Context {
  RunConfig config;
  fs::path root;
  std::ostream& out;
  std::ostream& err;
  json inputs = json::object();
  json outputs = json::object();
  json seeds = json::object();
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  HIERMESH_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  HIERMESH_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

std::vector<ObjectRecord> load_dataset(const fs::path& root) {
  std::vector<ObjectRecord> records;
  for (const auto& dir : list_object_dirs(root)) records.push_back(load_object(dir));
  HIERMESH_CHECK(!records.empty(), ErrorKind::kIo, "no objects under " + root.string());
  return records;
}

std::vector<ObjectRecord> training_records(Context& ctx) {
  std::vector<ObjectRecord> records;
  for (const ObjectRecord& r : load_dataset(ctx.root)) records.push_back(quantize_object(r));
  ctx.inputs["dataset"] = {{"root", ctx.root.string()}, {"objects", records.size()}};
  return records;
}

fs::path checkpoint(const Context& ctx, const char* name) { return fs::path(ctx.config.paths.checkpoints) / name; }

fs::path require_checkpoint(Context& ctx, const char* name) {
  const fs::path p = checkpoint(ctx, name);
  HIERMESH_CHECK(fs::exists(p), ErrorKind::kIo, "missing checkpoint " + p.string());
  ctx.inputs[name] = {{"path", p.string()}, {"hash", nn::file_hash(p)}};
  return p;
}

void record_output(Context& ctx, const std::string& key, const fs::path& path) {
  ctx.outputs[key] = {{"path", path.string()}, {"hash", fs::is_regular_file(path) ? nn::file_hash(path) : ""}};
}

std::vector<PointCloud> clouds_of(const std::vector<ObjectRecord>& records, std::size_t points, std::uint64_t seed) {
  std::vector<PointCloud> clouds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    clouds.push_back(sample_surface(part_meshes(records[i]), points, mix_seed(seed, i)));
  }
  return clouds;
}

json set_metrics_json(const SetMetrics& m) { return {{"mmd", m.mmd}, {"cov", m.cov}, {"nna", m.nna}}; }

// ---- subcommands ----

int dataset_gen(Context& ctx, const Options& o) {
  const fs::path dir = o.out.empty() ? ctx.root : fs::path(o.out);
  HIERMESH_CHECK(o.count > 0, ErrorKind::kConfig, "--count must be positive");
  const std::uint64_t seed = o.seed.value_or(ctx.config.dataset.seed);
  ctx.seeds["dataset"] = seed;
  int written = 0;
  int rejected = 0;
  for (int i = 0; i < o.count; ++i) {
    const ObjectRecord record = generate_synthetic_object(o.category, seed + static_cast<std::uint64_t>(i));
    auto kept = filter_parts(record, ctx.config.dataset.max_faces);
    if (!kept) {
      ++rejected;
      continue;
    }
    validate_object(*kept);
    save_object(*kept, dir / kept->object_id);
    ++written;
    for (int a = 0; a < ctx.config.dataset.augment_copies; ++a) {
      ObjectRecord aug = augment(*kept, mix_seed(seed + static_cast<std::uint64_t>(i), a + 1), ctx.config.dataset.augment);
      aug.object_id += "_aug" + std::to_string(a + 1);
      validate_object(aug);
      save_object(aug, dir / aug.object_id);
      ++written;
    }
  }
  ctx.outputs["dataset"] = {{"root", dir.string()}, {"objects", written}, {"rejected", rejected}};
  ctx.out << "wrote " << written << " objects to " << dir.string() << "\n";
  return 0;
}

int dataset_validate(Context& ctx, const Options&) {
  int ok = 0;
  int bad = 0;
  for (const auto& dir : list_object_dirs(ctx.root)) {
    try {
      validate_object(load_object(dir));
      ++ok;
    } catch (const Error& e) {
      ++bad;
      ctx.err << dir.string() << ": " << e.what() << "\n";
    }
  }
  ctx.outputs["validation"] = {{"valid", ok}, {"invalid", bad}};
  ctx.out << ok << " valid, " << bad << " invalid\n";
  return bad == 0 && ok > 0 ? 0 : 1;
}

int train_geometry_codec_cmd(Context& ctx, const Options& o) {
  std::vector<GeometryExample> examples;
  const auto& cfg = ctx.config.geometry_codec;
  for (const ObjectRecord& r : training_records(ctx)) {
    for (auto& e : geometry_examples(r, cfg.model.junction_threshold)) examples.push_back(std::move(e));
  }
  const fs::path path = checkpoint(ctx, kGeometryCodecFile);
  GeometryCodec codec = o.resume && fs::exists(path) ? GeometryCodec::load(path)
                                                      : GeometryCodec(cfg.model, ctx.config.seed);
  nn::Adam adam(codec.store());
  if (o.resume && fs::exists(path)) codec.load_optimizer(path, adam);
  CodecTrainConfig train = cfg.train;
  if (o.log_every > 0) train.log_every = o.log_every;
  ctx.seeds["model"] = ctx.config.seed;
  ctx.seeds["train"] = train.seed;
  const auto stats = train_geometry_codec(codec, adam, examples, train);
  fs::create_directories(path.parent_path());
  codec.save(path, &adam);
  const auto eval = evaluate_geometry_codec(codec, examples, 4096);
  ctx.outputs["metrics"] = {{"final_loss", stats.final_loss}, {"bin_accuracy", eval.bin_accuracy},
                            {"junction_auc", eval.junction_auc}, {"mean_chamfer", eval.mean_chamfer}};
  record_output(ctx, "checkpoint", path);
  ctx.out << "geometry codec: loss " << stats.final_loss << ", bin accuracy " << eval.bin_accuracy << "\n";
  return 0;
}

int train_structure_codec_cmd(Context& ctx, const Options& o) {
  const GeometryCodec gcodec = GeometryCodec::load(require_checkpoint(ctx, kGeometryCodecFile));
  std::vector<StructureSequence> sequences;
  for (ObjectRecord& r : training_records(ctx)) {
    attach_geometry_features(r, gcodec);
    sequences.push_back(build_structure_sequence(r));
  }
  const auto& cfg = ctx.config.structure_codec;
  const fs::path path = checkpoint(ctx, kStructureCodecFile);
  StructureCodec codec = o.resume && fs::exists(path) ? StructureCodec::load(path)
                                                       : StructureCodec(cfg.model, ctx.config.seed);
  nn::Adam adam(codec.store());
  if (o.resume && fs::exists(path)) codec.load_optimizer(path, adam);
  CodecTrainConfig train = cfg.train;
  if (o.log_every > 0) train.log_every = o.log_every;
  ctx.seeds["model"] = ctx.config.seed;
  ctx.seeds["train"] = train.seed;
  const auto stats = train_structure_codec(codec, adam, sequences, train);
  fs::create_directories(path.parent_path());
  codec.save(path, &adam);
  const auto eval = evaluate_structure_codec(codec, sequences);
  ctx.outputs["metrics"] = {{"final_loss", stats.final_loss}, {"bin_accuracy", eval.bin_accuracy},
                            {"joint_type_accuracy", eval.joint_type_accuracy}};
  record_output(ctx, "checkpoint", path);
  ctx.out << "structure codec: loss " << stats.final_loss << ", bin accuracy " << eval.bin_accuracy << "\n";
  return 0;
}

int prep_tokens(Context& ctx, const Options&) {
  const fs::path spath = require_checkpoint(ctx, kStructureCodecFile);
  const fs::path gpath = require_checkpoint(ctx, kGeometryCodecFile);
  const StructureCodec scodec = StructureCodec::load(spath);
  const GeometryCodec gcodec = GeometryCodec::load(gpath);
  const fs::path dir = ctx.config.paths.tokens;
  fs::create_directories(dir);
  int written = 0;
  for (ObjectRecord& r : training_records(ctx)) {
    attach_geometry_features(r, gcodec);
    TokenFile file{tokenize_object(r, scodec, gcodec, ctx.config.geometry_codec.model.junction_threshold),
                   nn::file_hash(spath), nn::file_hash(gpath)};
    write_token_file(dir / (r.object_id + kTokenSuffix), file);
    ++written;
  }
  ctx.outputs["tokens"] = {{"dir", dir.string()}, {"files", written}};
  ctx.out << "wrote " << written << " token files to " << dir.string() << "\n";
  return 0;
}

std::vector<TokenizedObject> load_tokens(Context& ctx) {
  std::vector<fs::path> files;
  const fs::path dir = ctx.config.paths.tokens;
  HIERMESH_CHECK(fs::is_directory(dir), ErrorKind::kIo, "missing token directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > std::string(kTokenSuffix).size() && name.ends_with(kTokenSuffix)) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  HIERMESH_CHECK(!files.empty(), ErrorKind::kIo, "no token files in " + dir.string());
  std::vector<TokenizedObject> objects;
  for (const auto& f : files) objects.push_back(read_token_file(f).object);
  ctx.inputs["tokens"] = {{"dir", dir.string()}, {"files", files.size()}};
  return objects;
}

int train_transformer_cmd(Context& ctx, const Options& o, bool geometry) {
  const auto objects = load_tokens(ctx);
  const TransformerStage& stage = geometry ? ctx.config.geometry_transformer : ctx.config.structure_transformer;
  std::vector<TransformerExample> examples;
  for (const auto& obj : objects) {
    try {
      if (geometry) {
        for (auto& e : geometry_transformer_examples(obj, stage.model.context, ctx.config.generation.dilation)) {
          if (e.length() <= stage.model.context) examples.push_back(std::move(e));
        }
      } else {
        TransformerExample e = structure_transformer_example(obj);
        if (e.length() <= stage.model.context) {
          examples.push_back(std::move(e));
        } else {
          ctx.err << "skipping " << obj.object_id << ": structure exceeds the context\n";
        }
      }
    } catch (const Error& e) {
      ctx.err << "skipping " << obj.object_id << ": " << e.what() << "\n";
    }
  }
  HIERMESH_CHECK(!examples.empty(), ErrorKind::kConfig, "no training sequences fit the context");
  const fs::path path = checkpoint(ctx, geometry ? kGeometryTfFile : kStructureTfFile);
  const bool resume = o.resume && fs::exists(path);
  Transformer model = resume ? Transformer::load(path) : Transformer(stage.model, ctx.config.seed);
  nn::Adam adam(model.store());
  if (resume) model.load_optimizer(path, adam);
  TransformerTrainConfig train = stage.train;
  if (o.log_every > 0) train.log_every = o.log_every;
  ctx.seeds["model"] = ctx.config.seed;
  ctx.seeds["train"] = train.seed;
  const auto stats = train_transformer(model, adam, examples, train);
  fs::create_directories(path.parent_path());
  model.save(path, &adam);
  const auto acc = evaluate_transformer(model, examples);
  ctx.outputs["metrics"] = {{"final_loss", stats.final_loss}, {"accuracy", acc.accuracy}, {"mean_nll", acc.mean_nll},
                            {"sequences", examples.size()}};
  record_output(ctx, "checkpoint", path);
  ctx.out << (geometry ? "geometry" : "structure") << " transformer: loss " << stats.final_loss
          << ", next-token accuracy " << acc.accuracy << "\n";
  return 0;
}

int sample_cmd(Context& ctx, const Options& o) {
  const StructureCodec scodec = StructureCodec::load(require_checkpoint(ctx, kStructureCodecFile));
  const GeometryCodec gcodec = GeometryCodec::load(require_checkpoint(ctx, kGeometryCodecFile));
  const Transformer stf = Transformer::load(require_checkpoint(ctx, kStructureTfFile));
  const Transformer gtf = Transformer::load(require_checkpoint(ctx, kGeometryTfFile));
  GenerationConfig gen = ctx.config.generation;
  if (!o.sampling_path.empty()) {
    const SamplingConfig s = parse_sampling_config(read_file(o.sampling_path));
    gen.structure_sampling = s;
    gen.geometry_sampling = s;
    ctx.inputs["sampling"] = {{"path", o.sampling_path}, {"hash", nn::file_hash(o.sampling_path)}};
  }
  const fs::path dir = o.out.empty() ? fs::path(ctx.config.paths.output) / "samples" : fs::path(o.out);
  fs::create_directories(dir);
  const std::uint64_t seed = o.seed.value_or(ctx.config.seed);
  ctx.seeds["sample"] = seed;
  const GenerationModels models{&scodec, &gcodec, &stf, &gtf};
  json objects = json::array();
  int failed = 0;
  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const GenerationResult r = generate_object(models, gen, s);
    if (r.ok) {
      save_object(r.object, dir / r.object.object_id);
      objects.push_back({{"seed", s}, {"object_id", r.object.object_id}});
      continue;
    }
    ++failed;
    const fs::path diag = dir / "failures" / ("seed_" + std::to_string(s) + ".json");
    write_file(diag, json{{"seed", s},
                          {"stage", r.diagnostic.stage},
                          {"reason", r.diagnostic.reason},
                          {"part", r.diagnostic.part},
                          {"structure_tokens", r.diagnostic.structure_tokens},
                          {"part_tokens", r.diagnostic.part_tokens}}
                         .dump(2));
    objects.push_back({{"seed", s}, {"diagnostic", diag.string()}});
    ctx.err << "seed " << s << " failed at " << r.diagnostic.stage << ": " << r.diagnostic.reason << " (see "
            << diag.string() << ")\n";
  }
  json provenance{{"checkpoints", ctx.inputs},
                  {"seed", seed},
                  {"count", o.count},
                  {"structure_sampling", json::parse(to_json(gen.structure_sampling))},
                  {"geometry_sampling", json::parse(to_json(gen.geometry_sampling))},
                  {"objects", objects}};
  write_file(dir / "provenance.json", provenance.dump(2));
  ctx.outputs["samples"] = {{"dir", dir.string()}, {"generated", o.count - failed}, {"failed", failed}};
  ctx.out << "generated " << (o.count - failed) << " of " << o.count << " objects into " << dir.string() << "\n";
  return failed == 0 ? 0 : 3;
}

int articulate_cmd(Context& ctx, const Options& o) {
  HIERMESH_CHECK(!o.object.empty(), ErrorKind::kConfig, "--object is required");
  const ObjectRecord record = load_object(o.object);
  const fs::path dir = o.out.empty() ? fs::path(ctx.config.paths.output) / "articulated" / record.object_id
                                     : fs::path(o.out);
  std::vector<ArticulationState> states;
  if (o.states > 0) {
    states = instantiation_states(o.states, static_cast<int>(record.parts.size()));
  } else {
    HIERMESH_CHECK(o.t >= 0.0 && o.t <= 1.0, ErrorKind::kConfig, "--t must lie in [0, 1]");
    states.push_back({std::vector<double>(record.parts.size(), o.t)});
  }
  fs::create_directories(dir);
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto meshes = articulate_object(record, states[k]);
    IndexedMesh merged;
    for (const auto& m : meshes) {
      const int base = static_cast<int>(merged.vertices.size());
      merged.vertices.insert(merged.vertices.end(), m.vertices.begin(), m.vertices.end());
      for (const Face& f : m.faces) merged.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
    save_obj(dir / ("state_" + std::to_string(k) + ".obj"), merged);
  }
  ctx.outputs["articulated"] = {{"dir", dir.string()}, {"states", states.size()}};
  ctx.out << "wrote " << states.size() << " articulation states to " << dir.string() << "\n";
  return 0;
}

int eval_metrics(Context& ctx, const Options& o) {
  HIERMESH_CHECK(!o.gen.empty() && !o.ref.empty(), ErrorKind::kConfig, "--gen and --ref are required");
  const auto gen = load_dataset(o.gen);
  const auto ref = load_dataset(o.ref);
  const auto& m = ctx.config.metrics;
  const std::uint64_t seed = o.seed.value_or(m.instantiation.seed);
  ctx.seeds["metrics"] = seed;
  const auto gc = clouds_of(gen, m.cloud_points, seed);
  const auto rc = clouds_of(ref, m.cloud_points, seed);
  const SetMetrics shape = set_metrics(gc, rc);
  json report{{"chamfer", "symmetric mean of unsquared nearest-neighbour distances"},
              {"gen", {{"dir", o.gen}, {"objects", gen.size()}}},
              {"ref", {{"dir", o.ref}, {"objects", ref.size()}}},
              {"shape", set_metrics_json(shape)},
              {"config", json::parse(to_json(ctx.config)).at("metrics")},
              {"seed", seed}};
  if (o.articulated) {
    for (const auto mode : {InstantiationMode::kMesh, InstantiationMode::kAabb}) {
      InstantiationConfig ic = m.instantiation;
      ic.mode = mode;
      ic.seed = seed;
      auto dist = [&](const std::vector<ObjectRecord>& a, const std::vector<ObjectRecord>& b) {
        Matrix d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
        for (std::size_t i = 0; i < a.size(); ++i) {
          for (std::size_t j = 0; j < b.size(); ++j) d(i, j) = instantiation_distance(a[i], b[j], ic);
        }
        return d;
      };
      const SetMetrics sm = set_metrics(dist(gen, ref), dist(gen, gen), dist(ref, ref));
      report[mode == InstantiationMode::kMesh ? "id" : "aid"] = set_metrics_json(sm);
    }
  }
  const fs::path path = o.out.empty() ? fs::path(ctx.config.paths.output) / "metrics.json" : fs::path(o.out);
  write_file(path, report.dump(2));
  record_output(ctx, "report", path);
  ctx.out << "MMD " << shape.mmd << "  COV " << shape.cov << "  1-NNA " << shape.nna << "\n";
  return 0;
}

int eval_novelty(Context& ctx, const Options& o) {
  HIERMESH_CHECK(!o.gen.empty() && !o.ref.empty(), ErrorKind::kConfig, "--gen and --train are required");
  const auto gen = load_dataset(o.gen);
  const auto train = load_dataset(o.ref);
  const std::uint64_t seed = o.seed.value_or(ctx.config.metrics.instantiation.seed);
  ctx.seeds["metrics"] = seed;
  const auto report = novelty_percentiles(clouds_of(gen, ctx.config.metrics.cloud_points, seed),
                                          clouds_of(train, ctx.config.metrics.cloud_points, seed));
  json nearest = json::array();
  for (std::size_t i = 0; i < gen.size(); ++i) {
    nearest.push_back({{"object_id", gen[i].object_id},
                       {"distance", report.distances[i]},
                       {"nearest", train[static_cast<std::size_t>(report.nearest[i])].object_id}});
  }
  json out{{"p10", report.p10}, {"p50", report.p50}, {"p90", report.p90}, {"shapes", nearest}, {"seed", seed}};
  const fs::path path = o.out.empty() ? fs::path(ctx.config.paths.output) / "novelty.json" : fs::path(o.out);
  write_file(path, out.dump(2));
  record_output(ctx, "report", path);
  ctx.out << "novelty p10 " << report.p10 << "  p50 " << report.p50 << "  p90 " << report.p90 << "\n";
  return 0;
}

int annotate_serve(Context& ctx, const Options& o) {
  AnnotationService service(ctx.root);
  AnnotationServer server(service);
  ctx.out << "serving " << ctx.root.string() << " on http://" << o.host << ":" << o.port << std::endl;
  server.listen(o.host, o.port);
  return 0;
}

void write_manifest(const Context& ctx, const std::string& command, const std::vector<std::string>& args,
                    const std::string& manifest, int code, double seconds) {
  std::string slug = command;
  std::replace(slug.begin(), slug.end(), ' ', '-');
  const fs::path path = manifest.empty() ? fs::path(ctx.config.paths.output) / "manifests" / (slug + ".json")
                                         : fs::path(manifest);
  json j{{"command", command},
         {"argv", args},
         {"preset", ctx.config.preset},
         {"config_hash", config_hash(ctx.config)},
         {"config", json::parse(to_json(ctx.config))},
         {"dataset_root", ctx.root.string()},
         {"seeds", ctx.seeds},
         {"inputs", ctx.inputs},
         {"outputs", ctx.outputs},
         {"exit_code", code},
         {"seconds", seconds}};
  write_file(path, j.dump(2));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical articulated mesh generation", "hiermesh"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Run config JSON");
  app.add_option("--preset", o.preset, "tiny | desk | paper (overrides the config file)");
  app.add_option("--root", o.root, "Dataset root (overrides HIERMESH_DATASET_ROOT and the config)");
  app.add_option("--manifest", o.manifest, "Manifest path");
  app.add_option("--log-every", o.log_every, "Training progress interval");

  using Handler = std::function<int(Context&, const Options&)>;
  std::vector<std::pair<CLI::App*, Handler>> leaves;
  std::map<CLI::App*, std::string> names;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help, Handler h) {
    CLI::App* sub = parent->add_subcommand(name, help);
    leaves.emplace_back(sub, std::move(h));
    names[sub] = parent == &app ? name : parent->get_name() + " " + name;
    return sub;
  };
  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& s) { o.seed = s; }, "Seed");
  };

  CLI::App* dataset = app.add_subcommand("dataset", "Synthetic dataset");
  dataset->require_subcommand(1);
  CLI::App* gen = leaf(dataset, "gen", "Generate synthetic objects", dataset_gen);
  gen->add_option("--category", o.category, "chair | storage | table");
  gen->add_option("--count", o.count, "Number of objects");
  gen->add_option("--out", o.out, "Output directory (default: dataset root)");
  seed_opt(gen);
  leaf(dataset, "validate", "Check every object against the record invariants", dataset_validate);

  CLI::App* prep = app.add_subcommand("prep", "Preprocessing");
  prep->require_subcommand(1);
  leaf(prep, "tokens", "Tokenize the dataset with the trained codecs", prep_tokens);

  CLI::App* train = app.add_subcommand("train", "Training stages");
  train->require_subcommand(1);
  train->add_flag("--resume", o.resume, "Continue from the existing checkpoint");
  leaf(train, "structure-codec", "Train the structure codec", train_structure_codec_cmd);
  leaf(train, "geometry-codec", "Train the geometry codec", train_geometry_codec_cmd);
  leaf(train, "structure-tf", "Train the structure transformer",
       [](Context& c, const Options& op) { return train_transformer_cmd(c, op, false); });
  leaf(train, "geometry-tf", "Train the geometry transformer",
       [](Context& c, const Options& op) { return train_transformer_cmd(c, op, true); });

  CLI::App* sample = leaf(&app, "sample", "Generate objects", sample_cmd);
  sample->add_option("--count", o.count, "Number of objects");
  sample->add_option("--out", o.out, "Output directory");
  sample->add_option("--sampling", o.sampling_path, "Sampling config JSON");
  seed_opt(sample);

  CLI::App* art = leaf(&app, "articulate", "Write articulated meshes of an object", articulate_cmd);
  art->add_option("--object", o.object, "Object directory")->required();
  art->add_option("--t", o.t, "Articulation value for every part");
  art->add_option("--states", o.states, "Write this many evenly spaced states instead");
  art->add_option("--out", o.out, "Output directory");

  CLI::App* ev = app.add_subcommand("eval", "Evaluation");
  ev->require_subcommand(1);
  CLI::App* met = leaf(ev, "metrics", "MMD / COV / 1-NNA between two object sets", eval_metrics);
  met->add_option("--gen", o.gen, "Generated objects")->required();
  met->add_option("--ref", o.ref, "Reference objects")->required();
  met->add_flag("--articulated", o.articulated, "Also report ID and AID based metrics");
  met->add_option("--out", o.out, "Report path");
  seed_opt(met);
  CLI::App* nov = leaf(ev, "novelty", "Distance of generated shapes to the training set", eval_novelty);
  nov->add_option("--gen", o.gen, "Generated objects")->required();
  nov->add_option("--train", o.ref, "Training objects")->required();
  nov->add_option("--out", o.out, "Report path");
  seed_opt(nov);

  CLI::App* ann = app.add_subcommand("annotate", "Annotation service");
  ann->require_subcommand(1);
  CLI::App* serve = leaf(ann, "serve", "Serve the annotation API", annotate_serve);
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* chosen = nullptr;
  Handler handler;
  for (auto& [sub, h] : leaves) {
    if (sub->parsed()) {
      chosen = sub;
      handler = h;
    }
  }
  if (!chosen) {
    err << app.help();
    return 2;
  }

  const auto start = std::chrono::steady_clock::now();
  std::optional<Context> ctx;
  try {
    json patch = json::object();
    if (!o.config_path.empty()) {
      try {
        patch = json::parse(read_file(o.config_path));
      } catch (const json::parse_error& e) {
        throw Error(ErrorKind::kParse, o.config_path + ": " + e.what());
      }
    }
    if (!o.preset.empty() && patch.is_object()) patch["preset"] = o.preset;
    RunConfig config = parse_run_config(patch.dump());
    fs::path root = config.paths.dataset;
    if (const char* env = std::getenv("HIERMESH_DATASET_ROOT"); env && *env) root = env;
    if (!o.root.empty()) root = o.root;
    config.paths.dataset = root.string();
    validate(config);
    ctx.emplace(Context{config, root, out, err});
    const int code = handler(*ctx, o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(*ctx, names[chosen], args, o.manifest, code, secs);
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (ctx) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ctx->outputs["error"] = e.what();
      try {
        write_manifest(*ctx, names[chosen], args, o.manifest, 1, secs);
      } catch (const Error&) {
      }
    }
    return 1;
  }
}

}  // namespace hiermesh::cli
