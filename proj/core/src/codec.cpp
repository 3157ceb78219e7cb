#include "hiermesh/codec.hpp"

#include <cmath>

#include "hiermesh/error.hpp"

namespace hiermesh {

void FaceLayout::append(const IndexedMesh& mesh) {
  const int face_offset = face_count();
  const int vertex_offset = vertex_count;
  segments.push_back({face_offset, face_offset + static_cast<int>(mesh.faces.size())});
  for (const auto& nbrs : face_adjacency(mesh)) {
    std::vector<int> shifted;
    shifted.reserve(nbrs.size());
    for (int f : nbrs) shifted.push_back(f + face_offset);
    adjacency.push_back(std::move(shifted));
  }
  vertex_slots.resize(static_cast<std::size_t>(vertex_offset) + mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    Face g;
    for (int c = 0; c < 3; ++c) {
      g[c] = mesh.faces[f][c] + vertex_offset;
      vertex_slots[static_cast<std::size_t>(g[c])].push_back(kSlotsPerFace * (face_offset + static_cast<int>(f)) + c);
    }
    faces.push_back(g);
  }
  vertex_count += static_cast<int>(mesh.vertices.size());
}

std::vector<int> FaceLayout::slot_vertices() const {
  std::vector<int> out;
  out.reserve(faces.size() * kSlotsPerFace);
  for (const Face& f : faces) out.insert(out.end(), f.begin(), f.end());
  return out;
}

FaceEncoder::FaceEncoder(nn::ParameterStore& store, const std::string& name, int in_width, const CodecShape& shape,
                         Rng& rng)
    : in_(store, name + ".in", in_width, shape.width, rng),
      out_(store, name + ".out", shape.width, kSlotsPerFace * shape.code_dim, rng) {
  for (int l = 0; l < shape.encoder_layers; ++l) {
    layers_.emplace_back(store, name + ".graph" + std::to_string(l), shape.width, shape.width, rng);
  }
}

nn::Var FaceEncoder::hidden(nn::Tape& tape, nn::Var input, const std::shared_ptr<const nn::Groups>& neighborhoods) const {
  nn::Var h = nn::relu(in_(tape, input));
  for (const nn::GraphAgg& layer : layers_) h = nn::add(h, nn::relu(layer(tape, h, neighborhoods)));
  return h;
}

FaceDecoder::FaceDecoder(nn::ParameterStore& store, const std::string& name, const CodecShape& shape, Rng& rng)
    : in_(store, name + ".in", kSlotsPerFace * shape.code_dim, shape.width, rng),
      trunk_(store, name + ".resnet", shape.width, shape.decoder_blocks, rng),
      norm_(store, name + ".norm", shape.width) {}

nn::Var FaceDecoder::operator()(nn::Tape& tape, nn::Var face_codes, const std::vector<nn::Segment>& segments) const {
  return nn::relu(norm_(tape, trunk_(tape, in_(tape, face_codes), segments)));
}

QuantizedFaces quantize_faces(nn::Tape& tape, nn::Var slots, const FaceLayout& layout, const Codebook& book) {
  const int n = layout.face_count();
  const int d = book.dim();
  HIERMESH_CHECK(slots.rows() == n && slots.cols() == kSlotsPerFace * d, ErrorKind::kShape,
                 "slot embeddings do not match the face layout");
  auto groups = std::make_shared<nn::Groups>(layout.vertex_slots);
  nn::Var per_slot = nn::reshape(slots, kSlotsPerFace * n, d);
  nn::Var vertices = nn::aggregate_mean(per_slot, groups);

  QuantizedFaces out;
  out.rq = book.quantize(vertices.value(), kRqDepth);
  nn::Var codes = tape.constant(out.rq.quantized);
  out.commitment = nn::mse(vertices, codes);
  nn::Var zq = nn::straight_through(vertices, codes);
  out.face_codes = nn::reshape(nn::gather_rows(zq, layout.slot_vertices()), n, kSlotsPerFace * d);

  out.tokens.reserve(static_cast<std::size_t>(n) * kSlotsPerFace * kRqDepth);
  for (const Face& f : layout.faces) {
    for (int c = 0; c < kSlotsPerFace; ++c) {
      for (int l = 0; l < kRqDepth; ++l) out.tokens.push_back(out.rq.code(f[c], l));
    }
  }
  return out;
}

Matrix embed_tokens(const std::vector<int>& tokens, const Codebook& book) {
  check_token_length(tokens, kSlotsPerFace * kRqDepth, "face tokens");
  const Matrix slot_codes = book.lookup_sum(tokens, kRqDepth);  // (3n, d)
  const auto n = slot_codes.rows() / kSlotsPerFace;
  return Eigen::Map<const Matrix>(slot_codes.data(), n, kSlotsPerFace * book.dim());
}

void check_token_length(const std::vector<int>& tokens, int multiple, const char* what) {
  HIERMESH_CHECK(!tokens.empty() && tokens.size() % static_cast<std::size_t>(multiple) == 0, ErrorKind::kStructural,
                 std::string(what) + ": length " + std::to_string(tokens.size()) + " is not a positive multiple of " +
                     std::to_string(multiple));
}

FaceResiduals face_residuals(const RqResult& rq, const FaceLayout& layout) {
  FaceResiduals out{Vector::Zero(layout.face_count()), Vector::Zero(layout.face_count())};
  for (int f = 0; f < layout.face_count(); ++f) {
    for (int c = 0; c < kSlotsPerFace; ++c) {
      const int v = layout.faces[static_cast<std::size_t>(f)][c];
      out.depth1(f) += std::pow(rq.residual_norms(v, 0), 2);
      out.depth2(f) += std::pow(rq.residual_norms(v, 1), 2);
    }
  }
  out.depth1 = out.depth1.cwiseSqrt();
  out.depth2 = out.depth2.cwiseSqrt();
  return out;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double argmax_accuracy(const Matrix& logits, const std::vector<int>& targets) {
  HIERMESH_CHECK(static_cast<Eigen::Index>(targets.size()) == logits.rows(), ErrorKind::kShape,
                 "accuracy: target count mismatch");
  if (targets.empty()) return 1.0;
  const auto pred = argmax_rows(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == targets[i];
  return static_cast<double>(hit) / static_cast<double>(targets.size());
}

}  // namespace hiermesh
