#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hiermesh/mesh.hpp"
#include "hiermesh/nn/layers.hpp"
#include "hiermesh/rq.hpp"

// Building blocks shared by the structure and geometry codecs.
namespace hiermesh {

inline constexpr int kRqDepth = 2;
inline constexpr int kSlotsPerFace = 3;

struct CodecShape {
  int codebook_size = 512;
  int code_dim = 64;
  int width = 192;
  int encoder_layers = 4;
  int decoder_blocks = 2;
};

struct CodecTrainConfig {
  int steps = 2000;
  int batch = 4;  // objects (structure) or parts (geometry) per step
  double lr = 1e-4;
  double clip_norm = 1.0;
  double ema_decay = 0.99;
  double dead_threshold = 1.0;
  int dead_window = 2000;
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 disables progress lines on stderr
};

// Faces of several meshes laid out back to back, one segment per mesh.
struct FaceLayout {
  std::vector<Face> faces;  // global vertex ids
  int vertex_count = 0;
  std::vector<nn::Segment> segments;
  std::vector<std::vector<int>> adjacency;  // global face ids
  std::vector<std::vector<int>> vertex_slots;  // vertex -> slot ids (3 * face + corner)

  void append(const IndexedMesh& mesh);
  int face_count() const { return static_cast<int>(faces.size()); }
  std::vector<int> slot_vertices() const;
};

class FaceEncoder {
 public:
  FaceEncoder(nn::ParameterStore& store, const std::string& name, int in_width, const CodecShape& shape, Rng& rng);

  // Per-face hidden features (faces x width).
  nn::Var hidden(nn::Tape& tape, nn::Var input, const std::shared_ptr<const nn::Groups>& neighborhoods) const;
  // Per-face slot embeddings (faces x 3 * code_dim).
  nn::Var slots(nn::Tape& tape, nn::Var hidden) const { return out_(tape, hidden); }

 private:
  nn::Linear in_;
  std::vector<nn::GraphAgg> layers_;
  nn::Linear out_;
};

class FaceDecoder {
 public:
  FaceDecoder(nn::ParameterStore& store, const std::string& name, const CodecShape& shape, Rng& rng);

  // face_codes: faces x 3 * code_dim -> faces x width.
  nn::Var operator()(nn::Tape& tape, nn::Var face_codes, const std::vector<nn::Segment>& segments) const;

 private:
  nn::Linear in_;
  nn::ResNet1d trunk_;
  nn::LayerNorm norm_;
};

struct QuantizedFaces {
  nn::Var face_codes;  // straight-through, faces x 3 * code_dim
  nn::Var commitment;  // mse(vertex embeddings, stop-gradient codes)
  RqResult rq;         // per vertex
  std::vector<int> tokens;
};

// Averages slot embeddings onto vertices, quantizes each vertex at depth 2 and
// gathers 6 tokens per face: (c1, c2) for each corner in face order.
QuantizedFaces quantize_faces(nn::Tape& tape, nn::Var slots, const FaceLayout& layout, const Codebook& book);

// Token sequence -> faces x 3 * code_dim code sums.
Matrix embed_tokens(const std::vector<int>& tokens, const Codebook& book);

// Throws ErrorKind::kStructural unless the length is a positive multiple of `multiple`.
void check_token_length(const std::vector<int>& tokens, int multiple, const char* what);

// Residual norms per face after depth 1 and depth 2 (root of the sum over the
// face's three vertices).
struct FaceResiduals {
  Vector depth1;
  Vector depth2;
};
FaceResiduals face_residuals(const RqResult& rq, const FaceLayout& layout);

// Fraction of rows whose argmax equals the target.
double argmax_accuracy(const Matrix& logits, const std::vector<int>& targets);
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace hiermesh
