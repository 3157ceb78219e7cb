#include "hiermesh/nn/tape.hpp"

#include "hiermesh/error.hpp"

namespace hiermesh::nn {

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
  HIERMESH_CHECK(!contains(name), ErrorKind::kConfig, "duplicate parameter '" + name + "'");
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.grad = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.trainable = trainable;
  return p;
}

Parameter& ParameterStore::get(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::kConfig, "no parameter named '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.grad.setZero();
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (!trainable_only || p.trainable) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  for (Parameter& p : params_) {
    const Parameter& src = other.get(p.name);
    HIERMESH_CHECK(src.value.rows() == p.value.rows() && src.value.cols() == p.value.cols(), ErrorKind::kShape,
                   "shape mismatch for '" + p.name + "'");
    p.value = src.value;
  }
}

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  const Matrix& g = tape_->grad_or_empty(id_);
  if (g.size() == 0) return Matrix::Zero(rows(), cols());
  return g;
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = true;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    HIERMESH_CHECK(v.tape() == this, ErrorKind::kState, "mixing variables from different tapes");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(backward);
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    HIERMESH_CHECK(v.tape() == this, ErrorKind::kState, "mixing variables from different tapes");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(backward);
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  HIERMESH_CHECK(loss.tape() == this, ErrorKind::kState, "loss belongs to another tape");
  HIERMESH_CHECK(loss.rows() == 1 && loss.cols() == 1, ErrorKind::kShape, "backward needs a scalar loss");
  grad(loss.id()).setConstant(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

}  // namespace hiermesh::nn
