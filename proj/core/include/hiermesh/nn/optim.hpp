#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiermesh/nn/tape.hpp"

namespace hiermesh::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient norm clip; 0 disables
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Bias-corrected adaptive-moment optimizer over the trainable parameters of a
// store. Moments start at zero.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config = {});

  // Applies one update from Parameter::grad, then zeroes the gradients.
  void step();
  std::int64_t steps() const { return t_; }
  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }

  void export_state(std::vector<NamedTensor>& out, const std::string& prefix) const;
  void import_state(const std::vector<NamedTensor>& in, const std::string& prefix, std::int64_t steps);

 private:
  ParameterStore* store_;
  AdamConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

double gradient_norm(const ParameterStore& store);

}  // namespace hiermesh::nn
