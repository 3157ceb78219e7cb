#include "hiermesh/transformer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "codec_io.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/nn/checkpoint.hpp"
#include "hiermesh/sequencing.hpp"

namespace hiermesh {

TokenStream assemble_structure_stream(const std::vector<int>& tokens, const VocabLayout& vocab, int context,
                                      int pad_to) {
  const auto n = static_cast<int>(tokens.size());
  HIERMESH_CHECK(n <= context - 2, ErrorKind::kStructural,
                 "structure sequence of " + std::to_string(n) + " tokens exceeds the context of " + std::to_string(context));
  for (int t : tokens) HIERMESH_CHECK(vocab.is_code(t), ErrorKind::kStructural, "token outside the codebook");
  TokenStream s;
  s.sequence.push_back(vocab.sos());
  s.sequence.insert(s.sequence.end(), tokens.begin(), tokens.end());
  s.sequence.push_back(vocab.eos());
  const int real = static_cast<int>(s.sequence.size());
  while (static_cast<int>(s.sequence.size()) < pad_to) s.sequence.push_back(vocab.pad());
  const std::size_t len = s.sequence.size();
  s.targets.assign(len, vocab.pad());
  s.mask.assign(len, 0);
  for (std::size_t k = 0; k + 1 < len; ++k) {
    s.targets[k] = s.sequence[k + 1];
    s.mask[k] = static_cast<int>(k) + 1 < real ? 1 : 0;
  }
  return s;
}

std::vector<int> flexible_positions(int prefix_len, int total_len) {
  HIERMESH_CHECK(prefix_len >= 0 && prefix_len <= total_len, ErrorKind::kShape, "prefix longer than the sequence");
  std::vector<int> ids(static_cast<std::size_t>(total_len), kConditionPositionId);
  for (int k = prefix_len; k < total_len; ++k) ids[static_cast<std::size_t>(k)] = 1 + k - prefix_len;
  return ids;
}

int TransformerExample::prefix_length() const {
  return (part >= 0 ? kTokensPerPart : 0) + static_cast<int>(junction.size());
}

Transformer::Transformer(const TransformerConfig& config, std::uint64_t seed)
    : Transformer(config, Rng(mix_seed(seed, fnv1a("transformer")))) {}

Transformer::Transformer(const TransformerConfig& config, Rng rng)
    : config_(config),
      token_embed_(store_, "embed.tokens", config.vocab().size(), config.width, rng),
      position_embed_(store_, "embed.positions", config.context + 1, config.width, rng),
      ln_f_(store_, "ln_f", config.width),
      head_(store_, "head", config.width, config.vocab().size(), rng) {
  HIERMESH_CHECK(config.codebook_size > 0 && config.layers > 0 && config.context > 2, ErrorKind::kConfig,
                 "transformer needs a codebook, layers and a context of at least 3");
  HIERMESH_CHECK(config.width % config.heads == 0, ErrorKind::kConfig, "width must divide into heads");
  const int w = config.width;
  if (config.conditioned()) {
    conditioner_ = std::make_unique<Conditioner>(Conditioner{
        nn::Embedding(store_, "cond.tokens", config.structure_codebook, w, rng),
        nn::Embedding(store_, "cond.positions", config.context, w, rng), nn::LayerNorm(store_, "cond.ln_q", w),
        nn::LayerNorm(store_, "cond.ln_kv", w),
        nn::MultiHeadAttention(store_, "cond.cross", w, config.heads, false, rng),
        nn::LayerNorm(store_, "cond.ln_mlp", w), nn::Linear(store_, "cond.fc1", w, 4 * w, rng),
        nn::Linear(store_, "cond.fc2", 4 * w, w, rng)});
  }
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    blocks_.push_back(Block{nn::LayerNorm(store_, p + ".ln1", w),
                            nn::MultiHeadAttention(store_, p + ".attn", w, config.heads, true, rng),
                            nn::LayerNorm(store_, p + ".ln2", w), nn::Linear(store_, p + ".fc1", w, 4 * w, rng),
                            nn::Linear(store_, p + ".fc2", 4 * w, w, rng)});
  }
  // Near-uniform predictions at init.
  head_.weight().value *= 0.1;
}

void Transformer::check_example(const TransformerExample& e) const {
  const VocabLayout vocab = config_.vocab();
  HIERMESH_CHECK(e.length() <= config_.context, ErrorKind::kStructural,
                 "sequence of " + std::to_string(e.length()) + " rows exceeds the context of " +
                     std::to_string(config_.context));
  for (int t : e.tokens) HIERMESH_CHECK(vocab.is_code(t), ErrorKind::kStructural, "token outside the codebook");
  for (int t : e.junction) HIERMESH_CHECK(vocab.is_code(t), ErrorKind::kStructural, "junction token outside the codebook");
  if (e.part >= 0) {
    HIERMESH_CHECK(config_.conditioned(), ErrorKind::kConfig, "model has no structure conditioner");
    HIERMESH_CHECK(static_cast<int>(e.structure.size()) >= kTokensPerPart * (e.part + 1), ErrorKind::kStructural,
                   "part " + std::to_string(e.part) + " has no structure tokens");
    HIERMESH_CHECK(static_cast<int>(e.structure.size()) <= config_.context, ErrorKind::kStructural,
                   "structure sequence exceeds the context");
    for (int t : e.structure) {
      HIERMESH_CHECK(t >= 0 && t < config_.structure_codebook, ErrorKind::kStructural, "structure token out of range");
    }
  } else {
    HIERMESH_CHECK(!config_.conditioned(), ErrorKind::kStructural, "conditioned model needs a part index");
  }
}

nn::Var Transformer::condition_rows(nn::Tape& tape, const std::vector<const TransformerExample*>& batch) const {
  const Conditioner& c = *conditioner_;
  std::vector<int> q_ids, q_pos, kv_ids, kv_pos;
  std::vector<nn::AttentionBlock> blocks;
  for (const TransformerExample* e : batch) {
    const int q0 = static_cast<int>(q_ids.size());
    const int k0 = static_cast<int>(kv_ids.size());
    for (int k = 0; k < kTokensPerPart; ++k) {
      const int at = e->part * kTokensPerPart + k;
      q_ids.push_back(e->structure[static_cast<std::size_t>(at)]);
      q_pos.push_back(at);
    }
    for (std::size_t k = 0; k < e->structure.size(); ++k) {
      kv_ids.push_back(e->structure[k]);
      kv_pos.push_back(static_cast<int>(k));
    }
    blocks.push_back({q0, q0 + kTokensPerPart, k0, static_cast<int>(kv_ids.size()), false});
  }
  nn::Var q = nn::add(c.tokens(tape, q_ids), c.positions(tape, q_pos));
  nn::Var kv = nn::add(c.tokens(tape, kv_ids), c.positions(tape, kv_pos));
  nn::Var h = nn::add(q, c.cross(tape, c.ln_q(tape, q), c.ln_kv(tape, kv), std::move(blocks)));
  return nn::add(h, c.fc2(tape, nn::gelu(c.fc1(tape, c.ln_mlp(tape, h)))));
}

nn::Var Transformer::block(nn::Tape& tape, const Block& b, nn::Var x,
                           const std::vector<nn::AttentionBlock>& blocks) const {
  x = nn::add(x, b.attn(tape, b.ln1(tape, x), std::nullopt, blocks));
  return nn::add(x, b.fc2(tape, nn::gelu(b.fc1(tape, b.ln2(tape, x)))));
}

Transformer::Forward Transformer::forward(nn::Tape& tape, const std::vector<const TransformerExample*>& batch) const {
  HIERMESH_CHECK(!batch.empty(), ErrorKind::kValidation, "empty transformer batch");
  const VocabLayout vocab = config_.vocab();
  std::vector<const TransformerExample*> conditioned;
  for (const TransformerExample* e : batch) {
    check_example(*e);
    if (e->part >= 0) conditioned.push_back(e);
  }
  const int cond_rows = static_cast<int>(conditioned.size()) * kTokensPerPart;

  Forward out;
  std::vector<int> ids;
  std::vector<int> order;
  std::vector<int> positions;
  std::vector<nn::AttentionBlock> blocks;
  int cond_next = 0;
  int row = 0;
  for (const TransformerExample* e : batch) {
    out.offsets.push_back(row);
    const int len = e->length();
    const int prefix = e->prefix_length();
    if (e->part >= 0) {
      for (int k = 0; k < kTokensPerPart; ++k) order.push_back(cond_next++);
    }
    auto push_token = [&](int t) {
      order.push_back(cond_rows + static_cast<int>(ids.size()));
      ids.push_back(t);
    };
    for (int t : e->junction) push_token(t);
    push_token(vocab.sos());
    for (int t : e->tokens) push_token(t);
    push_token(vocab.eos());
    const auto pos = flexible_positions(prefix, len);
    positions.insert(positions.end(), pos.begin(), pos.end());
    for (int k = 0; k < len; ++k) {
      const int m = k - prefix;  // row of SOS is m == 0
      const bool real = m >= 0 && m <= static_cast<int>(e->tokens.size());
      out.targets.push_back(!real ? vocab.pad()
                                  : (m < static_cast<int>(e->tokens.size()) ? e->tokens[static_cast<std::size_t>(m)]
                                                                            : vocab.eos()));
      out.mask.push_back(real ? 1 : 0);
    }
    blocks.push_back({row, row + len, row, row + len, true});
    row += len;
  }

  nn::Var tokens = token_embed_(tape, ids);
  nn::Var rows = conditioned.empty() ? tokens : nn::concat_rows({condition_rows(tape, conditioned), tokens});
  nn::Var x = nn::add(nn::gather_rows(rows, std::move(order)), position_embed_(tape, positions));
  for (const Block& b : blocks_) x = block(tape, b, x, blocks);
  out.logits = head_(tape, ln_f_(tape, x));
  out.loss = nn::cross_entropy(out.logits, out.targets, out.mask);
  return out;
}

Matrix Transformer::logits(const TransformerExample& example) const {
  nn::Tape tape;
  return forward(tape, {&example}).logits.value();
}

namespace {

detail::json config_to_json(const TransformerConfig& c) {
  return {{"codebook_size", c.codebook_size}, {"layers", c.layers},   {"heads", c.heads},
          {"width", c.width},                 {"context", c.context}, {"structure_codebook", c.structure_codebook}};
}

TransformerConfig config_from_json(const detail::json& j) {
  TransformerConfig c;
  c.codebook_size = j.at("codebook_size").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.context = j.at("context").get<int>();
  c.structure_codebook = j.at("structure_codebook").get<int>();
  return c;
}

}  // namespace

void Transformer::save(const std::filesystem::path& path, const nn::Adam* optimizer) const {
  const detail::json meta = {{"kind", "transformer"},
                             {"config", config_to_json(config_)},
                             {"trained_steps", trained_steps_},
                             {"optimizer_steps", optimizer ? optimizer->steps() : 0}};
  nn::Checkpoint ck;
  ck.metadata = meta.dump();
  nn::add_parameters(ck, store_);
  if (optimizer) optimizer->export_state(ck.tensors, "adam/");
  nn::write_checkpoint(path, ck);
}

Transformer Transformer::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "transformer");
  TransformerConfig config;
  try {
    config = config_from_json(meta.at("config"));
  } catch (const detail::json::exception& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": " + e.what());
  }
  Transformer model(config);
  nn::load_parameters(model.store_, ck);
  model.trained_steps_ = meta.value("trained_steps", std::int64_t{0});
  return model;
}

void Transformer::load_optimizer(const std::filesystem::path& path, nn::Adam& optimizer) const {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  const detail::json meta = detail::parse_metadata(ck, "transformer");
  optimizer.import_state(ck.tensors, "adam/", meta.value("optimizer_steps", std::int64_t{0}));
}

DecodingSession::DecodingSession(const Transformer& model, const TransformerExample& prefix) : model_(&model) {
  model.check_example(prefix);
  const TransformerConfig& cfg = model.config();
  keys_.assign(static_cast<std::size_t>(cfg.layers), Matrix(0, cfg.width));
  values_.assign(static_cast<std::size_t>(cfg.layers), Matrix(0, cfg.width));

  const VocabLayout vocab = cfg.vocab();
  const Matrix& table = model.token_embed_.table().value;
  const Matrix& pos = model.position_embed_.table().value;
  const int prefix_len = prefix.prefix_length();
  const int n = prefix_len + 1 + static_cast<int>(prefix.tokens.size());
  Matrix x(n, cfg.width);
  int r = 0;
  if (prefix.part >= 0) {
    nn::Tape tape;
    x.topRows(kTokensPerPart) = model.condition_rows(tape, {&prefix}).value();
    r = kTokensPerPart;
  }
  for (int t : prefix.junction) x.row(r++) = table.row(t);
  x.row(r++) = table.row(vocab.sos());
  for (int t : prefix.tokens) x.row(r++) = table.row(t);
  const auto ids = flexible_positions(prefix_len, n);
  for (int k = 0; k < n; ++k) x.row(k) += pos.row(ids[static_cast<std::size_t>(k)]);
  next_position_ = ids.back() + 1;
  extend(x);
}

void DecodingSession::push(int token) {
  const TransformerConfig& cfg = model_->config();
  HIERMESH_CHECK(remaining() > 0, ErrorKind::kSampling, "context exhausted");
  HIERMESH_CHECK(token >= 0 && token < cfg.vocab().size(), ErrorKind::kSampling, "token outside the vocabulary");
  RowVector x = model_->token_embed_.table().value.row(token) + model_->position_embed_.table().value.row(next_position_);
  ++next_position_;
  extend(x);
}

void DecodingSession::extend(const Matrix& embedded) {
  Matrix x = embedded;
  const auto n = static_cast<int>(x.rows());
  for (std::size_t l = 0; l < model_->blocks_.size(); ++l) {
    const Transformer::Block& b = model_->blocks_[l];
    const Matrix a = b.ln1.apply(x);
    Matrix& keys = keys_[l];
    Matrix& values = values_[l];
    const Eigen::Index old = keys.rows();
    keys.conservativeResize(old + n, Eigen::NoChange);
    values.conservativeResize(old + n, Eigen::NoChange);
    keys.bottomRows(n) = b.attn.k().apply(a);
    values.bottomRows(n) = b.attn.v().apply(a);
    Matrix att;
    nn::kernels::attention(b.attn.q().apply(a), keys, values, b.attn.heads(),
                           {{0, n, 0, static_cast<int>(keys.rows()), true}}, att);
    x += b.attn.o().apply(att);
    Matrix hidden = b.fc1.apply(b.ln2.apply(x));
    hidden = hidden.unaryExpr([](double v) { return nn::kernels::gelu(v); });
    x += b.fc2.apply(hidden);
  }
  rows_ += n;
  logits_ = model_->head_.apply(model_->ln_f_.apply(x.bottomRows(1))).row(0);
}

TransformerTrainStats train_transformer(Transformer& model, nn::Adam& optimizer,
                                        const std::vector<TransformerExample>& examples,
                                        const TransformerTrainConfig& config) {
  HIERMESH_CHECK(!examples.empty(), ErrorKind::kValidation, "empty training set");
  optimizer.config().lr = config.lr;
  optimizer.config().clip_norm = config.clip_norm;
  TransformerTrainStats stats;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t step = model.trained_steps(); step < config.steps; ++step) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(step)));
    std::vector<const TransformerExample*> batch;
    for (int i : detail::pick_batch(static_cast<int>(examples.size()), config.batch, rng)) {
      batch.push_back(&examples[static_cast<std::size_t>(i)]);
    }
    nn::Tape tape;
    const Transformer::Forward fwd = model.forward(tape, batch);
    tape.backward(fwd.loss);
    optimizer.step();
    model.set_trained_steps(step + 1);
    const double loss = fwd.loss.scalar();
    stats.loss_history.push_back(loss);
    stats.final_loss = loss;
    if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
      std::fprintf(stderr, "transformer step %lld loss %.5f\n", static_cast<long long>(step + 1), loss);
    }
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

TokenAccuracy evaluate_transformer(const Transformer& model, const std::vector<TransformerExample>& examples) {
  TokenAccuracy out;
  long hits = 0;
  double nll = 0.0;
  for (const TransformerExample& e : examples) {
    nn::Tape tape;
    const Transformer::Forward fwd = model.forward(tape, {&e});
    const Matrix& logits = fwd.logits.value();
    const Vector rows_nll = nn::token_nll(logits, fwd.targets);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      if (!fwd.mask[static_cast<std::size_t>(r)]) continue;
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      hits += best == fwd.targets[static_cast<std::size_t>(r)];
      nll += rows_nll(r);
      ++out.tokens;
    }
  }
  if (out.tokens > 0) {
    out.accuracy = static_cast<double>(hits) / static_cast<double>(out.tokens);
    out.mean_nll = nll / static_cast<double>(out.tokens);
  }
  return out;
}

void validate(const SamplingConfig& c) {
  HIERMESH_CHECK(c.beams >= 1, ErrorKind::kConfig, "sampling needs at least one beam");
  HIERMESH_CHECK(c.top_p > 0.0 && c.top_p <= 1.0, ErrorKind::kConfig, "top_p must lie in (0, 1]");
  HIERMESH_CHECK(std::isfinite(c.temperature), ErrorKind::kConfig, "temperature must be finite");
  HIERMESH_CHECK(c.retries >= 1, ErrorKind::kConfig, "retries must be at least 1");
}

namespace {

// Log-softmax over codes and EOS; PAD and SOS are never emitted.
RowVector emit_log_probs(const RowVector& logits, const VocabLayout& vocab, double temperature) {
  RowVector z = logits / (temperature > 0.0 ? temperature : 1.0);
  z(vocab.pad()) = -std::numeric_limits<double>::infinity();
  z(vocab.sos()) = -std::numeric_limits<double>::infinity();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

int draw(const RowVector& log_probs, double top_p, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(log_probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return log_probs(a) > log_probs(b); });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && mass < top_p) mass += std::exp(log_probs(order[keep++]));
  double u = rng.uniform() * mass;
  for (std::size_t i = 0; i < keep; ++i) {
    u -= std::exp(log_probs(order[i]));
    if (u <= 0.0) return order[i];
  }
  return order[keep - 1];
}

}  // namespace

SampleResult sample_sequence(const Transformer& model, const TransformerExample& prefix, int multiple,
                             const SamplingConfig& config) {
  validate(config);
  HIERMESH_CHECK(multiple > 0, ErrorKind::kConfig, "length multiple must be positive");
  const VocabLayout vocab = model.config().vocab();
  const DecodingSession root(model, prefix);
  const bool greedy = config.temperature <= 0.0;
  const int beams = greedy || config.mode == SamplingMode::kNucleus ? 1 : config.beams;

  for (int attempt = 0; attempt < config.retries; ++attempt) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(attempt)));
    SampleResult best;
    bool found = false;
    for (int b = 0; b < beams; ++b) {
      DecodingSession session = root;
      std::vector<int> tokens;
      double log_prob = 0.0;
      int emitted = 0;
      while (true) {
        const RowVector scored = emit_log_probs(session.logits(), vocab, 1.0);
        int token;
        if (greedy) {
          Eigen::Index arg;
          scored.maxCoeff(&arg);
          token = static_cast<int>(arg);
        } else {
          token = draw(emit_log_probs(session.logits(), vocab, config.temperature), config.top_p, rng);
        }
        log_prob += scored(token);
        ++emitted;
        if (token == vocab.eos()) break;
        tokens.push_back(token);
        if (session.remaining() <= 0) break;
        session.push(token);
      }
      const bool valid = !tokens.empty() && tokens.size() % static_cast<std::size_t>(multiple) == 0;
      const double mean = log_prob / emitted;
      if (valid && (!found || mean > best.mean_log_prob)) {
        best.tokens = std::move(tokens);
        best.mean_log_prob = mean;
        found = true;
      }
    }
    if (found) {
      best.attempts = attempt + 1;
      return best;
    }
  }
  throw Error(ErrorKind::kSampling, "no valid sample after " + std::to_string(config.retries) + " attempts");
}

}  // namespace hiermesh
