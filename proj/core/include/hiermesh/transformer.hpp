#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hiermesh/nn/layers.hpp"
#include "hiermesh/nn/optim.hpp"

// Decoder-only transformers over codebook tokens, with an optional structure
// conditioner for the per-part geometry model.
namespace hiermesh {

struct VocabLayout {
  int codebook_size = 512;

  int pad() const { return codebook_size; }
  int sos() const { return codebook_size + 1; }
  int eos() const { return codebook_size + 2; }
  int size() const { return codebook_size + 3; }
  bool is_code(int token) const { return token >= 0 && token < codebook_size; }
};

// [SOS] + tokens + [EOS], PAD-filled to `pad_to`. targets[k] = sequence[k+1];
// mask is 1 exactly where the target is a real token or EOS. Throws
// ErrorKind::kStructural when the tokens do not fit in `context`.
struct TokenStream {
  std::vector<int> sequence;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
};
TokenStream assemble_structure_stream(const std::vector<int>& tokens, const VocabLayout& vocab, int context,
                                      int pad_to = 0);

// Prefix rows share position id 0; rows from SOS on get 1, 2, 3, ...
std::vector<int> flexible_positions(int prefix_len, int total_len);
inline constexpr int kConditionPositionId = 0;

struct TransformerConfig {
  int codebook_size = 512;
  int layers = 4;
  int heads = 4;
  int width = 128;
  int context = 1024;
  // Non-zero adds the structure conditioner: the part's structure tokens
  // cross-attend to the whole structure sequence and form the prefix.
  int structure_codebook = 0;

  VocabLayout vocab() const { return {codebook_size}; }
  bool conditioned() const { return structure_codebook > 0; }
};

// One training or sampling sequence. For the structure model only `tokens`
// is used; the geometry model reads the condition fields as well.
struct TransformerExample {
  std::vector<int> structure;  // whole structure token sequence
  int part = -1;               // which 72-token slice forms the condition
  std::vector<int> junction;   // geometry tokens of cached junction faces
  std::vector<int> tokens;     // target stream without SOS / EOS

  int prefix_length() const;  // condition rows before SOS
  int length() const { return prefix_length() + static_cast<int>(tokens.size()) + 2; }
};

class Transformer {
 public:
  explicit Transformer(const TransformerConfig& config, std::uint64_t seed = 0);
  Transformer(const Transformer&) = delete;
  Transformer& operator=(const Transformer&) = delete;
  Transformer(Transformer&&) = default;
  Transformer& operator=(Transformer&&) = default;

  const TransformerConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  std::int64_t trained_steps() const { return trained_steps_; }
  void set_trained_steps(std::int64_t steps) { trained_steps_ = steps; }

  struct Forward {
    nn::Var logits;  // packed rows of every example
    nn::Var loss;
    std::vector<int> targets;
    std::vector<std::uint8_t> mask;
    std::vector<int> offsets;  // first row of each example
  };
  // Teacher-forced pass over packed examples; loss covers target tokens and
  // EOS only (condition rows are masked).
  Forward forward(nn::Tape& tape, const std::vector<const TransformerExample*>& batch) const;
  // Logits for one example (rows = example.length()).
  Matrix logits(const TransformerExample& example) const;

  void save(const std::filesystem::path& path, const nn::Adam* optimizer = nullptr) const;
  static Transformer load(const std::filesystem::path& path);
  void load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const;

 private:
  friend class DecodingSession;
  struct Block {
    nn::LayerNorm ln1;
    nn::MultiHeadAttention attn;
    nn::LayerNorm ln2;
    nn::Linear fc1;
    nn::Linear fc2;
  };
  struct Conditioner {
    nn::Embedding tokens;
    nn::Embedding positions;
    nn::LayerNorm ln_q;
    nn::LayerNorm ln_kv;
    nn::MultiHeadAttention cross;
    nn::LayerNorm ln_mlp;
    nn::Linear fc1;
    nn::Linear fc2;
  };

  Transformer(const TransformerConfig& config, Rng rng);
  void check_example(const TransformerExample& example) const;
  // Cross-attended condition rows for each conditioned example, stacked.
  nn::Var condition_rows(nn::Tape& tape, const std::vector<const TransformerExample*>& batch) const;
  nn::Var block(nn::Tape& tape, const Block& b, nn::Var x, const std::vector<nn::AttentionBlock>& blocks) const;

  TransformerConfig config_;
  nn::ParameterStore store_;
  nn::Embedding token_embed_;
  nn::Embedding position_embed_;
  std::unique_ptr<Conditioner> conditioner_;
  std::vector<Block> blocks_;
  nn::LayerNorm ln_f_;
  nn::Linear head_;
  std::int64_t trained_steps_ = 0;
};

// Incremental decoding with per-layer key/value caches. Feeding the same rows
// as a full causal pass gives the same logits.
class DecodingSession {
 public:
  // Consumes the condition rows, SOS and any tokens already in `prefix`.
  DecodingSession(const Transformer& model, const TransformerExample& prefix);

  const RowVector& logits() const { return logits_; }
  void push(int token);
  int length() const { return rows_; }
  int remaining() const { return model_->config().context - rows_; }

 private:
  void extend(const Matrix& embedded);

  const Transformer* model_;
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  int rows_ = 0;
  int next_position_ = 1;
  RowVector logits_;
};

struct TransformerTrainConfig {
  int steps = 2000;
  int batch = 8;  // examples per step; <= 0 uses all
  double lr = 1e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  int log_every = 0;
};

struct TransformerTrainStats {
  std::vector<double> loss_history;
  double final_loss = 0.0;
  double seconds = 0.0;
};

TransformerTrainStats train_transformer(Transformer& model, nn::Adam& optimizer,
                                        const std::vector<TransformerExample>& examples,
                                        const TransformerTrainConfig& config);

struct TokenAccuracy {
  double accuracy = 0.0;  // argmax == target over unmasked rows
  double mean_nll = 0.0;
  long tokens = 0;
};
TokenAccuracy evaluate_transformer(const Transformer& model, const std::vector<TransformerExample>& examples);

enum class SamplingMode { kBeam, kNucleus };

struct SamplingConfig {
  SamplingMode mode = SamplingMode::kBeam;
  int beams = 4;
  double top_p = 0.95;
  double temperature = 1.0;  // <= 0 decodes greedily
  std::uint64_t seed = 0;
  int retries = 5;           // attempts before reporting failure
};

void validate(const SamplingConfig& config);

struct SampleResult {
  std::vector<int> tokens;
  double mean_log_prob = 0.0;
  int attempts = 0;
};

// Samples after the prefix until EOS or the context limit. Samples whose
// length is not a positive multiple of `multiple` are rejected and drawn
// again; ErrorKind::kSampling after `retries` rejections.
SampleResult sample_sequence(const Transformer& model, const TransformerExample& prefix, int multiple,
                             const SamplingConfig& config);

}  // namespace hiermesh
