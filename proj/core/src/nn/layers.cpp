#include "hiermesh/nn/layers.hpp"

#include <cmath>

#include "hiermesh/error.hpp"

namespace hiermesh::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear: return "linear";
    case LayerKind::kLayerNorm: return "layernorm";
    case LayerKind::kEmbedding: return "embedding";
    case LayerKind::kGraphAgg: return "graph_agg";
    case LayerKind::kResNet1d: return "resnet1d";
    case LayerKind::kAttention: return "attention";
  }
  return "linear";
}

const std::vector<LayerKind>& all_layer_kinds() {
  static const std::vector<LayerKind> kinds = {LayerKind::kLinear,   LayerKind::kLayerNorm, LayerKind::kEmbedding,
                                               LayerKind::kGraphAgg, LayerKind::kResNet1d,  LayerKind::kAttention};
  return kinds;
}

void validate(const LayerSpec& spec) {
  const std::string name(to_string(spec.kind));
  HIERMESH_CHECK(spec.in > 0 && spec.out > 0, ErrorKind::kShape, name + ": sizes must be positive");
  switch (spec.kind) {
    case LayerKind::kLinear:
    case LayerKind::kEmbedding:
    case LayerKind::kGraphAgg:
      break;
    case LayerKind::kLayerNorm:
      HIERMESH_CHECK(spec.in == spec.out, ErrorKind::kShape, "layernorm preserves width");
      break;
    case LayerKind::kResNet1d:
      HIERMESH_CHECK(spec.in == spec.out, ErrorKind::kShape, "resnet1d preserves width");
      HIERMESH_CHECK(spec.depth > 0, ErrorKind::kShape, "resnet1d needs at least one block");
      break;
    case LayerKind::kAttention:
      HIERMESH_CHECK(spec.in == spec.out, ErrorKind::kShape, "attention preserves width");
      HIERMESH_CHECK(spec.heads > 0 && spec.in % spec.heads == 0, ErrorKind::kShape,
                     "attention width " + std::to_string(spec.in) + " not divisible by " +
                         std::to_string(spec.heads) + " heads");
      break;
  }
}

std::unique_ptr<Layer> make_layer(ParameterStore& store, const std::string& name, const LayerSpec& spec, Rng& rng) {
  validate(spec);
  switch (spec.kind) {
    case LayerKind::kLinear: return std::make_unique<Linear>(store, name, spec.in, spec.out, rng, spec.bias);
    case LayerKind::kLayerNorm: return std::make_unique<LayerNorm>(store, name, spec.in);
    case LayerKind::kEmbedding: return std::make_unique<Embedding>(store, name, spec.in, spec.out, rng);
    case LayerKind::kGraphAgg: return std::make_unique<GraphAgg>(store, name, spec.in, spec.out, rng);
    case LayerKind::kResNet1d: return std::make_unique<ResNet1d>(store, name, spec.in, spec.depth, rng);
    case LayerKind::kAttention:
      return std::make_unique<MultiHeadAttention>(store, name, spec.in, spec.heads, spec.causal, rng);
  }
  throw Error(ErrorKind::kConfig, "unknown layer kind");
}

Matrix uniform_init(int rows, int cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix normal_init(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias)
    : Layer({LayerKind::kLinear, in, out, 1, false, 1, bias}) {
  validate(spec_);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w_ = &store.add(name + ".w", uniform_init(in, out, bound, rng));
  if (bias) b_ = &store.add(name + ".b", uniform_init(1, out, bound, rng));
}

Var Linear::operator()(Tape& tape, Var x) const {
  HIERMESH_CHECK(x.cols() == spec_.in, ErrorKind::kShape,
                 w_->name + ": input width " + std::to_string(x.cols()) + ", expected " + std::to_string(spec_.in));
  Var y = matmul(x, tape.param(*w_));
  return b_ ? add_row(y, tape.param(*b_)) : y;
}

Matrix Linear::apply(const Matrix& x) const {
  HIERMESH_CHECK(x.cols() == spec_.in, ErrorKind::kShape, w_->name + ": input width mismatch");
  Matrix y = x * w_->value;
  if (b_) y.rowwise() += RowVector(b_->value);
  return y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim)
    : Layer({LayerKind::kLayerNorm, dim, dim}) {
  validate(spec_);
  gamma_ = &store.add(name + ".gamma", Matrix::Ones(1, dim));
  beta_ = &store.add(name + ".beta", Matrix::Zero(1, dim));
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  HIERMESH_CHECK(x.cols() == spec_.in, ErrorKind::kShape, gamma_->name + ": width mismatch");
  return layer_norm(x, tape.param(*gamma_), tape.param(*beta_));
}

Matrix LayerNorm::apply(const Matrix& x) const {
  HIERMESH_CHECK(x.cols() == spec_.in, ErrorKind::kShape, gamma_->name + ": width mismatch");
  Matrix out;
  kernels::layer_norm(x, gamma_->value, beta_->value, out);
  return out;
}

Embedding::Embedding(ParameterStore& store, const std::string& name, int count, int dim, Rng& rng)
    : Layer({LayerKind::kEmbedding, count, dim}) {
  validate(spec_);
  table_ = &store.add(name + ".table", normal_init(count, dim, 0.02, rng));
}

Var Embedding::operator()(Tape& tape, const std::vector<int>& indices) const {
  return gather_rows(tape.param(*table_), indices);
}

GraphAgg::GraphAgg(ParameterStore& store, const std::string& name, int in, int out, Rng& rng)
    : Layer({LayerKind::kGraphAgg, in, out}), map_(store, name, in, out, rng) {}

Var GraphAgg::operator()(Tape& tape, Var x, const std::shared_ptr<const Groups>& neighborhoods) const {
  HIERMESH_CHECK(neighborhoods && static_cast<Eigen::Index>(neighborhoods->size()) == x.rows(), ErrorKind::kShape,
                 "graph_agg: one neighborhood per row required");
  return aggregate_mean(map_(tape, x), neighborhoods);
}

std::shared_ptr<const Groups> neighborhoods_with_self(const std::vector<std::vector<int>>& adjacency, int offset) {
  auto groups = std::make_shared<Groups>(adjacency.size());
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    auto& g = (*groups)[i];
    g.reserve(adjacency[i].size() + 1);
    g.push_back(static_cast<int>(i) + offset);
    for (int j : adjacency[i]) g.push_back(j + offset);
  }
  return groups;
}

ResNet1d::ResNet1d(ParameterStore& store, const std::string& name, int width, int depth, Rng& rng)
    : Layer({LayerKind::kResNet1d, width, width, 1, false, depth}) {
  validate(spec_);
  for (int b = 0; b < depth; ++b) {
    convs_.emplace_back(store, name + ".block" + std::to_string(b) + ".conv0", 3 * width, width, rng);
    convs_.emplace_back(store, name + ".block" + std::to_string(b) + ".conv1", 3 * width, width, rng);
  }
}

Var ResNet1d::conv(Tape& tape, const Linear& k, Var x, const std::vector<Segment>& segments) const {
  return k(tape, concat_cols({shift_rows(x, -1, segments), x, shift_rows(x, 1, segments)}));
}

Var ResNet1d::operator()(Tape& tape, Var x, const std::vector<Segment>& segments) const {
  HIERMESH_CHECK(x.cols() == spec_.in, ErrorKind::kShape, "resnet1d: width mismatch");
  const std::vector<Segment> segs =
      segments.empty() ? std::vector<Segment>{{0, static_cast<int>(x.rows())}} : segments;
  Var h = x;
  for (std::size_t b = 0; b < convs_.size(); b += 2) {
    Var y = conv(tape, convs_[b], relu(h), segs);
    y = conv(tape, convs_[b + 1], relu(y), segs);
    h = add(h, y);
  }
  return h;
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads,
                                       bool causal, Rng& rng)
    : Layer({LayerKind::kAttention, dim, dim, heads, causal}),
      q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng, /*bias=*/false),
      v_(store, name + ".v", dim, dim, rng),
      o_(store, name + ".o", dim, dim, rng) {
  validate(spec_);
}

Var MultiHeadAttention::forward(Tape& tape, const LayerInput& input) const {
  return (*this)(tape, input.x, input.context, input.blocks);
}

Var MultiHeadAttention::operator()(Tape& tape, Var x, std::optional<Var> context,
                                   std::vector<AttentionBlock> blocks) const {
  const Var kv = context ? *context : x;
  if (blocks.empty()) {
    blocks.push_back({0, static_cast<int>(x.rows()), 0, static_cast<int>(kv.rows()), spec_.causal});
  }
  Var q = q_(tape, x);
  Var k = k_(tape, kv);
  Var v = v_(tape, kv);
  return o_(tape, attention(q, k, v, spec_.heads, std::move(blocks)));
}

}  // namespace hiermesh::nn
