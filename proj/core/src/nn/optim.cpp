#include "hiermesh/nn/optim.hpp"

#include <cmath>

#include "hiermesh/error.hpp"

namespace hiermesh::nn {

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(&store), config_(config) {
  for (Parameter& p : store.all()) {
    if (!p.trainable) continue;
    params_.push_back(&p);
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step() {
  ++t_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = gradient_norm(*store_);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const auto g = p.grad.array() * clip;
    m_[i].array() = config_.beta1 * m_[i].array() + (1.0 - config_.beta1) * g;
    v_[i].array() = config_.beta2 * v_[i].array() + (1.0 - config_.beta2) * g.square();
    p.value.array() -= config_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    p.grad.setZero();
  }
}

void Adam::export_state(std::vector<NamedTensor>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({prefix + "m/" + params_[i]->name, m_[i]});
    out.push_back({prefix + "v/" + params_[i]->name, v_[i]});
  }
}

void Adam::import_state(const std::vector<NamedTensor>& in, const std::string& prefix, std::int64_t steps) {
  auto find = [&](const std::string& name) -> const Matrix& {
    for (const NamedTensor& t : in) {
      if (t.name == name) return t.value;
    }
    throw Error(ErrorKind::kSchema, "checkpoint lacks optimizer tensor '" + name + "'");
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& m = find(prefix + "m/" + params_[i]->name);
    const Matrix& v = find(prefix + "v/" + params_[i]->name);
    HIERMESH_CHECK(m.rows() == m_[i].rows() && m.cols() == m_[i].cols(), ErrorKind::kShape,
                   "optimizer state shape mismatch for '" + params_[i]->name + "'");
    m_[i] = m;
    v_[i] = v;
  }
  t_ = steps;
}

double gradient_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const Parameter& p : store.all()) {
    if (p.trainable) sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace hiermesh::nn
