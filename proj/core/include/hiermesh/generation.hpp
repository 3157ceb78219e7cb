#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "hiermesh/geometry_codec.hpp"
#include "hiermesh/structure_codec.hpp"
#include "hiermesh/transformer.hpp"

namespace hiermesh {

inline constexpr double kJunctionProbability = 0.5;
inline constexpr double kJunctionDilation = 0.02;

struct JunctionFace {
  std::array<Point3, 3> corners;
  std::array<int, kTokensPerFace> tokens{};
  int source_part = 0;

  Point3 centroid() const { return (corners[0] + corners[1] + corners[2]) / 3.0; }
};

class JunctionCache {
 public:
  explicit JunctionCache(double threshold = kJunctionProbability) : threshold_(threshold) {}

  // Keeps the face only when probability > threshold.
  bool insert(const JunctionFace& face, double probability);
  // Inserts the junction faces of a decoded part (corners from the argmax bins).
  int insert_part(const std::vector<int>& tokens, const GeometryPrediction& prediction, int part);

  // Faces whose centroid lies inside `box` dilated by rho, ordered by their
  // lowest corner in (z, y, x), then the remaining corners, then tokens.
  std::vector<JunctionFace> retrieve(const Aabb& box, double rho = kJunctionDilation) const;

  const std::vector<JunctionFace>& faces() const { return faces_; }
  std::size_t size() const { return faces_.size(); }
  double threshold() const { return threshold_; }

 private:
  double threshold_;
  std::vector<JunctionFace> faces_;
};

// Condition for part `part`: its structure slice plus junction tokens. When
// the prefix and `reserve` rows exceed `context`, the junction faces farthest
// from the box center are dropped first; ErrorKind::kStructural if the
// structure block alone still does not fit.
TransformerExample assemble_geometry_prefix(int part, const std::vector<int>& structure,
                                            std::vector<JunctionFace> junction, const Aabb& box, int context,
                                            int reserve);

// Codec outputs for one object, the inputs of both transformers.
struct TokenizedObject {
  std::string object_id;
  std::vector<int> structure;                   // 72 per part
  std::vector<Aabb> boxes;                      // part boxes at bin resolution
  std::vector<std::vector<int>> part_tokens;    // 6 per face, canonical face order
  std::vector<std::vector<FaceBins>> part_bins;  // ground-truth corners per face
  std::vector<std::vector<int>> junction;       // 0/1 per face
};

// Expects geometry features attached (see attach_geometry_features).
TokenizedObject tokenize_object(const ObjectRecord& record, const StructureCodec& structure,
                                const GeometryCodec& geometry, double junction_threshold = kDefaultJunctionThreshold);

TransformerExample structure_transformer_example(const TokenizedObject& object);
// One example per part; junction prefix from ground-truth junction faces of
// earlier parts, retrieved exactly as during generation.
std::vector<TransformerExample> geometry_transformer_examples(const TokenizedObject& object, int context,
                                                              double rho = kJunctionDilation);

// Token file: JSON with structure tokens, part boundaries, per-part geometry
// tokens, junction flags and the hashes of the codec checkpoints used.
struct TokenFile {
  TokenizedObject object;
  std::string structure_codec_hash;
  std::string geometry_codec_hash;
};
void write_token_file(const std::filesystem::path& path, const TokenFile& file);
TokenFile read_token_file(const std::filesystem::path& path);

struct GenerationModels {
  const StructureCodec* structure_codec = nullptr;
  const GeometryCodec* geometry_codec = nullptr;
  const Transformer* structure_transformer = nullptr;
  const Transformer* geometry_transformer = nullptr;
};

struct GenerationConfig {
  SamplingConfig structure_sampling;
  SamplingConfig geometry_sampling;
  double junction_probability = kJunctionProbability;
  double dilation = kJunctionDilation;
  int max_part_faces = 200;  // rows reserved for mesh tokens when trimming junction prefixes
  std::string category = "storage";  // written into generated records
};

struct GenerationDiagnostic {
  std::string stage;   // structure | geometry | assemble | validate
  std::string reason;
  int part = -1;
  std::vector<int> structure_tokens;
  std::vector<std::vector<int>> part_tokens;
};

struct GenerationResult {
  bool ok = false;
  ObjectRecord object;
  std::vector<DecodedPart> structure;
  GenerationDiagnostic diagnostic;
};

// Structure sample -> decoded boxes -> per part (bottom-up) geometry sample
// conditioned on the structure and cached junction faces -> record. The
// result is validated against every record invariant.
GenerationResult generate_object(const GenerationModels& models, const GenerationConfig& config, std::uint64_t seed);

}  // namespace hiermesh
