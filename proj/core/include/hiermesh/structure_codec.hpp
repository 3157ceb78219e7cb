#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "hiermesh/codec.hpp"
#include "hiermesh/dataset.hpp"
#include "hiermesh/geometry_codec.hpp"
#include "hiermesh/nn/optim.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh {

// Per-face encoder input: geometric features, label feature, geometry
// feature and articulation features side by side.
inline constexpr int kStructureInputWidth =
    kGeometricFeatureWidth + kLabelFeatureDim + kGeometryFeatureDim + kArticulationFeatureWidth;

struct StructurePrediction {
  Matrix coord_logits;     // (9 * faces, 128)
  Matrix type_logits;      // (parts, 3), averaged over each part's faces
  Matrix exists_logits;    // (parts, 2)
  Matrix location_logits;  // (3 * parts, 128)
  Matrix orientation;      // (parts, 3)
  Matrix label;            // (parts, 768)
  Matrix geometry;         // (parts, 128)

  int part_count() const { return static_cast<int>(type_logits.rows()); }
};

struct StructureLossWeights {
  double coords = 1.0;
  double joint_type = 1.0;
  double exists = 1.0;
  double location = 1.0;
  double orientation = 1.0;
  double label = 1.0;
  double geometry = 1.0;
  double commitment = 0.25;
};

struct StructureLossBreakdown {
  double coords = 0.0;
  double joint_type = 0.0;
  double exists = 0.0;
  double location = 0.0;
  double orientation = 0.0;
  double label = 0.0;
  double geometry = 0.0;
  double commitment = 0.0;
  double total = 0.0;
};

struct StructureCodecConfig {
  CodecShape shape;
  StructureLossWeights weights;
};

// Argmax cosine similarity over the table; ties go to the alphabetically first label.
std::string decode_semantic_label(const Vector& feature, const LabelTable& table = LabelTable::standard());

// Fills geometry_feature of every part that lacks one.
void attach_geometry_features(ObjectRecord& record, const GeometryCodec& codec);

class StructureCodec {
 public:
  explicit StructureCodec(const StructureCodecConfig& config, std::uint64_t seed = 0);
  StructureCodec(const StructureCodec&) = delete;
  StructureCodec& operator=(const StructureCodec&) = delete;
  StructureCodec(StructureCodec&&) = default;
  StructureCodec& operator=(StructureCodec&&) = default;

  const StructureCodecConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  std::int64_t trained_steps() const { return trained_steps_; }
  void set_trained_steps(std::int64_t steps) { trained_steps_ = steps; }

  struct Forward {
    StructurePrediction prediction;
    StructureLossBreakdown loss;
    RqResult rq;
    FaceLayout layout;
    std::vector<int> tokens;     // concatenated over the batch
    std::vector<int> part_offsets;  // first part row of each sequence
  };
  Forward forward(const std::vector<const StructureSequence*>& batch, nn::Tape& tape, nn::Var* loss_var) const;

  // Per-face encoder embeddings (12N x width).
  Matrix encode_embeddings(const StructureSequence& seq) const;
  // 72 tokens per part.
  std::vector<int> encode(const StructureSequence& seq) const;
  std::vector<int> encode(const ObjectRecord& record) const { return encode(build_structure_sequence(record)); }
  StructurePrediction decode(const std::vector<int>& tokens) const;

  StructureLossBreakdown loss(const StructurePrediction& prediction, const StructureSequence& target) const;

  void save(const std::filesystem::path& path, const nn::Adam* optimizer = nullptr) const;
  static StructureCodec load(const std::filesystem::path& path);
  void load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const;

 private:
  StructureCodec(const StructureCodecConfig& config, Rng rng);
  struct Heads;
  Heads heads(nn::Tape& tape, nn::Var decoded, const std::shared_ptr<const nn::Groups>& parts, int faces) const;

  StructureCodecConfig config_;
  nn::ParameterStore store_;
  Codebook codebook_;
  FaceEncoder encoder_;
  FaceDecoder decoder_;
  nn::Linear coord_head_;
  nn::Linear type_head_;
  nn::Linear exists_head_;
  nn::Linear location_head_;
  nn::Linear orientation_head_;
  nn::Linear label_head_;
  nn::Linear geometry_head_;
  std::int64_t trained_steps_ = 0;
};

CodecTrainStats train_structure_codec(StructureCodec& codec, nn::Adam& optimizer,
                                      const std::vector<StructureSequence>& sequences, const CodecTrainConfig& config);

struct StructureEval {
  double bin_accuracy = 0.0;
  double joint_type_accuracy = 0.0;
  double exists_accuracy = 0.0;
  double location_accuracy = 0.0;
  double label_accuracy = 0.0;
  double max_orientation_error = 0.0;
  double max_depth_ratio = 0.0;
  int parts = 0;
};
StructureEval evaluate_structure_codec(const StructureCodec& codec, const std::vector<StructureSequence>& sequences);

inline constexpr int kDegenerateSpreadBins = 3;

struct DecodedPart {
  Aabb aabb;
  Joint joint;
  std::string label;
  std::vector<double> geometry;
  bool degenerate = false;
  int spread = 0;  // largest corner disagreement in bins
};

// Box per part by corner consensus over its 12 faces: per axis the implied
// bins split into a low and a high group, each resolved by its median. Joint
// fields come from the part-averaged heads; prismatic ranges follow the body
// box rule. Throws ErrorKind::kStructural unless the length is a multiple of 72.
std::vector<DecodedPart> decode_structure_sample(const std::vector<int>& tokens, const StructureCodec& codec);
// The same from an existing prediction.
std::vector<DecodedPart> decode_structure_prediction(const StructurePrediction& prediction);

}  // namespace hiermesh
