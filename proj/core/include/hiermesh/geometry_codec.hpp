#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hiermesh/codec.hpp"
#include "hiermesh/nn/optim.hpp"
#include "hiermesh/record.hpp"

namespace hiermesh {

inline constexpr double kDefaultJunctionThreshold = 0.015;

struct JunctionLabeling {
  std::vector<bool> flags;
  std::vector<double> distances;  // min distance to any other part
};

// Face-to-part distance is the min over point-to-triangle distances from the
// face's vertices and centroid to the other part's triangles, and from those
// triangles' vertices and centroids back to the face. The check is symmetric,
// so contact flags both sides.
JunctionLabeling label_junction_faces(const ObjectRecord& record, int part_index,
                                      double tau = kDefaultJunctionThreshold);

// Distance between two triangles under the same point sampling.
double face_pair_distance(const std::array<Point3, 3>& a, const std::array<Point3, 3>& b);

// Vertices sorted (z, y, x), faces rotated and sorted; idempotent.
IndexedMesh canonical_mesh(const IndexedMesh& mesh);

struct GeometryPrediction {
  Matrix coord_logits;   // (9 * faces, 128)
  Vector junction_prob;  // per face, in [0, 1]

  int face_count() const { return static_cast<int>(junction_prob.size()); }
};

struct GeometryLossWeights {
  double coords = 1.0;
  double junction = 1.0;
  double commitment = 0.25;
  double feature = 0.1;  // auxiliary readout that shapes the part feature
};

struct GeometryLossBreakdown {
  double coords = 0.0;
  double junction = 0.0;
  double commitment = 0.0;
  double feature = 0.0;
  double total = 0.0;
};

struct GeometryCodecConfig {
  CodecShape shape;
  GeometryLossWeights weights;
  double junction_threshold = kDefaultJunctionThreshold;
};

// One training part: canonical mesh plus supervision.
struct GeometryExample {
  IndexedMesh mesh;
  std::vector<int> bins;         // 9 per face
  Matrix features;               // geometric face features
  std::vector<double> junction;  // 0/1 per face
  RowVector descriptor;          // auxiliary feature-readout target
};

std::vector<GeometryExample> geometry_examples(const ObjectRecord& record, double junction_threshold);

class GeometryCodec {
 public:
  explicit GeometryCodec(const GeometryCodecConfig& config, std::uint64_t seed = 0);
  GeometryCodec(const GeometryCodec&) = delete;
  GeometryCodec& operator=(const GeometryCodec&) = delete;
  GeometryCodec(GeometryCodec&&) = default;
  GeometryCodec& operator=(GeometryCodec&&) = default;

  const GeometryCodecConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  std::int64_t trained_steps() const { return trained_steps_; }
  void set_trained_steps(std::int64_t steps) { trained_steps_ = steps; }

  struct Forward {
    GeometryPrediction prediction;
    GeometryLossBreakdown loss;
    RqResult rq;
    FaceLayout layout;
    std::vector<int> tokens;
    Matrix features;  // per example, 128 wide
  };
  // Full encode -> quantize -> decode pass. With a tape it also builds the
  // differentiable loss in `loss_var`.
  Forward forward(const std::vector<const GeometryExample*>& batch, nn::Tape& tape, nn::Var* loss_var) const;

  // Tokens for a mesh, faces in canonical order.
  std::vector<int> encode(const IndexedMesh& mesh) const;
  GeometryPrediction decode(const std::vector<int>& tokens) const;
  // argmax -> dequantize -> weld.
  static IndexedMesh reconstruct(const GeometryPrediction& prediction);
  // 128-wide part feature. Throws ErrorKind::kState if the codec is untrained.
  std::vector<double> part_feature(const IndexedMesh& mesh) const;

  GeometryLossBreakdown loss(const GeometryPrediction& prediction, const GeometryExample& example) const;

  void save(const std::filesystem::path& path, const nn::Adam* optimizer = nullptr) const;
  static GeometryCodec load(const std::filesystem::path& path);
  // Restores optimizer moments saved alongside the parameters.
  void load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const;

 private:
  GeometryCodec(const GeometryCodecConfig& config, Rng rng);

  GeometryCodecConfig config_;
  nn::ParameterStore store_;
  Codebook codebook_;
  FaceEncoder encoder_;
  FaceDecoder decoder_;
  nn::Linear coord_head_;
  nn::Linear junction_head_;
  nn::Linear feature_head_;
  nn::Linear feature_readout_;
  std::int64_t trained_steps_ = 0;
};

struct CodecTrainStats {
  std::vector<double> loss_history;
  double final_loss = 0.0;
  double seconds = 0.0;
};

// Trains in place (resuming from codec.trained_steps()). Deterministic given
// config.seed: the batch and codebook randomness of step s depend only on
// (seed, s).
CodecTrainStats train_geometry_codec(GeometryCodec& codec, nn::Adam& optimizer,
                                     const std::vector<GeometryExample>& examples, const CodecTrainConfig& config);

struct GeometryEval {
  double bin_accuracy = 0.0;
  double junction_auc = 0.0;
  double mean_chamfer = 0.0;  // reconstructed vs ground-truth part meshes
  double max_depth_ratio = 0.0;  // max over faces of depth2 / depth1 residual
  int faces = 0;
};
GeometryEval evaluate_geometry_codec(const GeometryCodec& codec, const std::vector<GeometryExample>& examples,
                                     int chamfer_points_per_unit_area = 0);

}  // namespace hiermesh
