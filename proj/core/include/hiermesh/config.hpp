#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hiermesh/dataset.hpp"
#include "hiermesh/generation.hpp"
#include "hiermesh/geometry_codec.hpp"
#include "hiermesh/metrics.hpp"
#include "hiermesh/structure_codec.hpp"
#include "hiermesh/transformer.hpp"

namespace hiermesh {

// Compiled-in constants, echoed in every config so a run records them.
struct ModelConstants {
  int grid = kGridResolution;
  int tokens_per_face = kTokensPerFace;
  int rq_depth = kRqDepth;
  double revolute_range = kRevoluteRange;
};

struct DatasetConfig {
  std::vector<std::string> categories = category_set();
  int count = 16;  // objects per category
  std::uint64_t seed = 0;
  int max_faces = kDefaultMaxFaces;
  int augment_copies = 0;
  AugmentConfig augment;
};

struct MetricsConfig {
  InstantiationConfig instantiation;
  std::size_t cloud_points = 2048;
  int seeds = 10;
};

struct RunPaths {
  std::string dataset = "data";
  std::string tokens = "tokens";
  std::string checkpoints = "checkpoints";
  std::string output = "out";
};

struct StructureCodecStage {
  StructureCodecConfig model;
  CodecTrainConfig train;
};

struct GeometryCodecStage {
  GeometryCodecConfig model;
  CodecTrainConfig train;
};

struct TransformerStage {
  TransformerConfig model;
  TransformerTrainConfig train;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  ModelConstants constants;
  RunPaths paths;
  DatasetConfig dataset;
  StructureCodecStage structure_codec;
  GeometryCodecStage geometry_codec;
  TransformerStage structure_transformer;
  TransformerStage geometry_transformer;
  GenerationConfig generation;
  MetricsConfig metrics;
};

// "tiny" (overfit-sized), "desk" or "paper". ErrorKind::kConfig otherwise.
RunConfig preset_config(std::string_view name);
const std::vector<std::string>& preset_names();

// Throws ErrorKind::kConfig naming the first inconsistent field.
void validate(const RunConfig& config);

std::string to_json(const RunConfig& config);
// Starts from the preset named by "preset" (default desk) and applies the
// given fields. Unknown keys are ErrorKind::kSchema, malformed JSON kParse.
// The result is validated.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// FNV-1a of the canonical JSON, hex.
std::string config_hash(const RunConfig& config);

SamplingConfig parse_sampling_config(std::string_view text);
std::string to_json(const SamplingConfig& config);

}  // namespace hiermesh
