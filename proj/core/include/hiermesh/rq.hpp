#pragma once

#include <string>
#include <vector>

#include "hiermesh/matrix.hpp"
#include "hiermesh/nn/tape.hpp"
#include "hiermesh/rng.hpp"

namespace hiermesh {

struct RqResult {
  std::vector<int> codes;  // row-major (rows x depth)
  Matrix quantized;        // sum of the chosen codes per row
  Matrix residual_norms;   // rows x depth, |z - sum of first l codes|
  std::vector<Matrix> stage_inputs;  // residual fed to each depth
  int depth = 0;

  int code(int row, int level) const { return codes[static_cast<std::size_t>(row * depth + level)]; }
};

// Greedy residual quantization: at each depth pick the nearest code (lowest
// index on ties) to the running residual and subtract it.
RqResult residual_quantize(const Matrix& z, const Matrix& codebook, int depth);

// Index of the nearest codebook row for every row of x.
std::vector<int> nearest_codes(const Matrix& x, const Matrix& codebook);

struct CodebookConfig {
  int size = 512;
  int dim = 64;
  double decay = 0.99;
  double dead_threshold = 1.0;  // usage below this over a window marks a code dead
  int dead_window = 2000;       // steps
  double epsilon = 1e-5;
};

// EMA-updated codebook living in a ParameterStore as non-trainable buffers.
// Code 0 is pinned to the zero vector, so a later depth can always choose "no
// refinement" and residual norms never grow with depth.
class Codebook {
 public:
  Codebook(nn::ParameterStore& store, const std::string& name, const CodebookConfig& config);

  const CodebookConfig& config() const { return config_; }
  void set_update_schedule(double decay, double dead_threshold, int dead_window) {
    config_.decay = decay;
    config_.dead_threshold = dead_threshold;
    config_.dead_window = dead_window;
  }
  const Matrix& entries() const { return entries_->value; }
  int size() const { return config_.size; }
  int dim() const { return config_.dim; }
  bool initialized() const { return state_->value(0, 0) > 0.0; }

  RqResult quantize(const Matrix& z, int depth) const;
  // Sum of the listed codes (one row per group of `depth` consecutive ids).
  Matrix lookup_sum(const std::vector<int>& codes, int depth) const;

  // EMA statistics from one batch, then dead-code reseeding at window ends.
  // The first call seeds every free code from batch residuals.
  void update(const RqResult& result, Rng& rng);

  // Usage over the current window (counts per code).
  const Matrix& usage() const { return usage_->value; }
  int active_codes() const;

 private:
  void seed_codes(const std::vector<int>& which, const RqResult& result, Rng& rng);

  CodebookConfig config_;
  nn::Parameter* entries_;
  nn::Parameter* ema_count_;
  nn::Parameter* ema_sum_;
  nn::Parameter* usage_;
  nn::Parameter* state_;  // (initialized, steps in window)
};

}  // namespace hiermesh
