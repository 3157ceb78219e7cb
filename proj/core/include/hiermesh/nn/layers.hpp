#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiermesh/nn/ops.hpp"
#include "hiermesh/rng.hpp"

namespace hiermesh::nn {

enum class LayerKind { kLinear, kLayerNorm, kEmbedding, kGraphAgg, kResNet1d, kAttention };

std::string_view to_string(LayerKind kind);
const std::vector<LayerKind>& all_layer_kinds();

struct LayerSpec {
  LayerKind kind = LayerKind::kLinear;
  int in = 0;    // input width, or table size for embeddings
  int out = 0;   // output width
  int heads = 1;
  bool causal = false;
  int depth = 1;  // residual blocks for resnet1d
  bool bias = true;
};

// Throws ErrorKind::kShape for incompatible sizes.
void validate(const LayerSpec& spec);

// Everything a layer may consume; unused fields are ignored.
struct LayerInput {
  Var x;
  std::optional<Var> context;                 // cross-attention keys/values
  std::vector<int> indices;                   // embedding lookups
  std::shared_ptr<const Groups> neighborhoods;  // graph_agg: self plus neighbours per row
  std::vector<Segment> segments;              // resnet1d sequence boundaries
  std::vector<AttentionBlock> blocks;         // attention; empty means one block over everything
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(Tape& tape, const LayerInput& input) const = 0;
  const LayerSpec& spec() const { return spec_; }

 protected:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  LayerSpec spec_;
};

std::unique_ptr<Layer> make_layer(ParameterStore& store, const std::string& name, const LayerSpec& spec, Rng& rng);

// Parameter initializers.
Matrix uniform_init(int rows, int cols, double bound, Rng& rng);
Matrix normal_init(int rows, int cols, double stddev, Rng& rng);

class Linear : public Layer {
 public:
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias = true);
  Var forward(Tape& tape, const LayerInput& input) const override { return (*this)(tape, input.x); }
  Var operator()(Tape& tape, Var x) const;
  Parameter& weight() const { return *w_; }
  Parameter* bias() const { return b_; }
  // Tape-free evaluation for cached inference.
  Matrix apply(const Matrix& x) const;

 private:
  Parameter* w_;
  Parameter* b_ = nullptr;
};

class LayerNorm : public Layer {
 public:
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  Var forward(Tape& tape, const LayerInput& input) const override { return (*this)(tape, input.x); }
  Var operator()(Tape& tape, Var x) const;
  const Parameter& gamma() const { return *gamma_; }
  const Parameter& beta() const { return *beta_; }
  Matrix apply(const Matrix& x) const;

 private:
  Parameter* gamma_;
  Parameter* beta_;
};

class Embedding : public Layer {
 public:
  Embedding(ParameterStore& store, const std::string& name, int count, int dim, Rng& rng);
  Var forward(Tape& tape, const LayerInput& input) const override { return (*this)(tape, input.indices); }
  Var operator()(Tape& tape, const std::vector<int>& indices) const;
  const Parameter& table() const { return *table_; }

 private:
  Parameter* table_;
};

// Mean over {self} plus neighbours of a learned linear map.
class GraphAgg : public Layer {
 public:
  GraphAgg(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);
  Var forward(Tape& tape, const LayerInput& input) const override {
    return (*this)(tape, input.x, input.neighborhoods);
  }
  Var operator()(Tape& tape, Var x, const std::shared_ptr<const Groups>& neighborhoods) const;

 private:
  Linear map_;
};

// Builds {self} plus adjacency lists for GraphAgg.
std::shared_ptr<const Groups> neighborhoods_with_self(const std::vector<std::vector<int>>& adjacency, int offset = 0);

// h <- h + conv(relu(conv(relu(h)))) per block; kernel 3, padding 1, per segment.
class ResNet1d : public Layer {
 public:
  ResNet1d(ParameterStore& store, const std::string& name, int width, int depth, Rng& rng);
  Var forward(Tape& tape, const LayerInput& input) const override { return (*this)(tape, input.x, input.segments); }
  Var operator()(Tape& tape, Var x, const std::vector<Segment>& segments) const;

 private:
  Var conv(Tape& tape, const Linear& k, Var x, const std::vector<Segment>& segments) const;
  std::vector<Linear> convs_;
};

class MultiHeadAttention : public Layer {
 public:
  MultiHeadAttention(ParameterStore& store, const std::string& name, int dim, int heads, bool causal, Rng& rng);
  Var forward(Tape& tape, const LayerInput& input) const override;
  // blocks empty: one block over all rows (causal per the layer flag).
  Var operator()(Tape& tape, Var x, std::optional<Var> context, std::vector<AttentionBlock> blocks) const;

  const Linear& q() const { return q_; }
  const Linear& k() const { return k_; }
  const Linear& v() const { return v_; }
  const Linear& o() const { return o_; }
  int heads() const { return spec_.heads; }

 private:
  Linear q_;
  Linear k_;  // no bias: softmax is invariant to it
  Linear v_;
  Linear o_;
};

}  // namespace hiermesh::nn
