#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hiermesh/matrix.hpp"

namespace hiermesh::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;  // false for buffers (EMA statistics, counters)
};

// Owns every parameter of a model. Addresses are stable for the store's lifetime.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix value, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_grad();
  std::size_t scalar_count(bool trainable_only = true) const;
  // Copies values from `other` by name; every parameter here must exist there.
  void copy_values_from(const ParameterStore& other);

 private:
  std::deque<Parameter> params_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  // Gradient after Tape::backward; zero if nothing flowed here.
  Matrix grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode recorder. Nodes are appended in creation order, which is a
// topological order, so backward walks them once from the back.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Matrix value);
  Var leaf(Matrix value);  // differentiable input not tied to a parameter
  Var param(Parameter& p);

  // Creates an op node. requires_grad is inherited from the inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  // Lazily zero-allocated gradient buffer.
  Matrix& grad(int id);
  const Matrix& grad_or_empty(int id) const { return nodes_[id].grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into Parameter::grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

}  // namespace hiermesh::nn
