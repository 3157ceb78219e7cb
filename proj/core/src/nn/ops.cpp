#include "hiermesh/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hiermesh/error.hpp"

namespace hiermesh::nn {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  HIERMESH_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape,
                 std::string(op) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Accumulates g into input's gradient if the input is differentiable.
template <typename Expr>
void accumulate(Tape& t, const Var& input, const Expr& g) {
  if (t.requires_grad(input.id())) t.grad(input.id()) += g;
}

Var scalar_node(Tape& t, double value, std::initializer_list<Var> inputs, Tape::Backward backward) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return t.record(std::move(m), inputs, std::move(backward));
}

}  // namespace

Var matmul(Var a, Var b) {
  HIERMESH_CHECK(a.cols() == b.rows(), ErrorKind::kShape,
                 "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.grad(a.id()).noalias() += g * b.value().transpose();
    if (t.requires_grad(b.id())) t.grad(b.id()).noalias() += a.value().transpose() * g;
  });
}

Var linear(Var x, Var w, Var b) {
  HIERMESH_CHECK(b.rows() == 1 && b.cols() == w.cols(), ErrorKind::kShape, "linear: bias width mismatch");
  return add_row(matmul(x, w), b);
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    if (t.requires_grad(b.id())) t.grad(b.id()) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g.cwiseProduct(b.value()));
    accumulate(t, b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, {a}, [a, s](Tape& t, int self) { accumulate(t, a, t.grad(self) * s); });
}

Var add_row(Var a, Var row) {
  HIERMESH_CHECK(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::kShape, "add_row: width mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    if (t.requires_grad(row.id())) t.grad(row.id()) += g.colwise().sum();
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, int self) {
    accumulate(t, a, t.grad(self).cwiseProduct((a.value().array() > 0.0).cast<double>().matrix()));
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().unaryExpr([](double x) { return kernels::gelu(x); }), {a}, [a](Tape& t, int self) {
    accumulate(t, a,
               t.grad(self).cwiseProduct(a.value().unaryExpr([](double x) { return kernels::gelu_derivative(x); })));
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    accumulate(t, a, t.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var layer_norm(Var x, Var gamma, Var beta) {
  HIERMESH_CHECK(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 && beta.cols() == x.cols(),
                 ErrorKind::kShape, "layer_norm: parameter width mismatch");
  Tape& t = *x.tape();
  Matrix out;
  auto xhat = std::make_shared<Matrix>();
  auto inv_std = std::make_shared<Vector>();
  kernels::layer_norm(x.value(), gamma.value().row(0), beta.value().row(0), out, xhat.get(), inv_std.get());
  return t.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(gamma.id())) t.grad(gamma.id()) += g.cwiseProduct(*xhat).colwise().sum();
    if (t.requires_grad(beta.id())) t.grad(beta.id()) += g.colwise().sum();
    if (!t.requires_grad(x.id())) return;
    const double d = static_cast<double>(x.cols());
    Matrix gh = g.array().rowwise() * gamma.value().row(0).array();
    Matrix& gx = t.grad(x.id());
    for (Eigen::Index r = 0; r < gh.rows(); ++r) {
      const double mean_g = gh.row(r).sum() / d;
      const double mean_gx = gh.row(r).dot(xhat->row(r)) / d;
      gx.row(r).array() += (*inv_std)(r) * (gh.row(r).array() - mean_g - xhat->row(r).array() * mean_gx);
    }
  });
}

Var gather_rows(Var table, std::vector<int> indices) {
  Tape& t = *table.tape();
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    HIERMESH_CHECK(indices[i] >= 0 && indices[i] < table.rows(), ErrorKind::kShape,
                   "gather_rows: index " + std::to_string(indices[i]) + " out of range " +
                       std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  return t.record(std::move(out), {table}, [table, indices = std::move(indices)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(table.id());
    for (std::size_t i = 0; i < indices.size(); ++i) gt.row(indices[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  HIERMESH_CHECK(!parts.empty(), ErrorKind::kShape, "concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    HIERMESH_CHECK(p.rows() == rows, ErrorKind::kShape, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index c = 0;
    for (const Var& p : parts) {
      accumulate(t, p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  HIERMESH_CHECK(!parts.empty(), ErrorKind::kShape, "concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    HIERMESH_CHECK(p.cols() == cols, ErrorKind::kShape, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index r = 0;
    for (const Var& p : parts) {
      accumulate(t, p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var slice_rows(Var a, int begin, int count) {
  HIERMESH_CHECK(begin >= 0 && count >= 0 && begin + count <= a.rows(), ErrorKind::kShape, "slice_rows out of range");
  Tape& t = *a.tape();
  return t.record(a.value().middleRows(begin, count), {a}, [a, begin, count](Tape& t, int self) {
    t.grad(a.id()).middleRows(begin, count) += t.grad(self);
  });
}

Var slice_cols(Var a, int begin, int count) {
  HIERMESH_CHECK(begin >= 0 && count >= 0 && begin + count <= a.cols(), ErrorKind::kShape, "slice_cols out of range");
  Tape& t = *a.tape();
  return t.record(a.value().middleCols(begin, count), {a}, [a, begin, count](Tape& t, int self) {
    t.grad(a.id()).middleCols(begin, count) += t.grad(self);
  });
}

Var reshape(Var a, int rows, int cols) {
  HIERMESH_CHECK(static_cast<Eigen::Index>(rows) * cols == a.value().size(), ErrorKind::kShape,
                 "reshape: element count mismatch");
  Tape& t = *a.tape();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(a.id()) += Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols());
  });
}

Var aggregate_mean(Var a, std::shared_ptr<const Groups> groups) {
  Tape& t = *a.tape();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups->size()), a.cols());
  for (std::size_t i = 0; i < groups->size(); ++i) {
    const auto& members = (*groups)[i];
    if (members.empty()) continue;
    for (int m : members) {
      HIERMESH_CHECK(m >= 0 && m < a.rows(), ErrorKind::kShape, "aggregate_mean: member out of range");
      out.row(static_cast<Eigen::Index>(i)) += a.value().row(m);
    }
    out.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(members.size());
  }
  return t.record(std::move(out), {a}, [a, groups](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id());
    for (std::size_t i = 0; i < groups->size(); ++i) {
      const auto& members = (*groups)[i];
      if (members.empty()) continue;
      const double w = 1.0 / static_cast<double>(members.size());
      for (int m : members) ga.row(m) += w * g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var shift_rows(Var a, int offset, const std::vector<Segment>& segments) {
  Tape& t = *a.tape();
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (const Segment& s : segments) {
    HIERMESH_CHECK(s.begin >= 0 && s.end <= a.rows() && s.begin <= s.end, ErrorKind::kShape,
                   "shift_rows: segment out of range");
    for (int r = s.begin; r < s.end; ++r) {
      const int src = r + offset;
      if (src >= s.begin && src < s.end) out.row(r) = a.value().row(src);
    }
  }
  return t.record(std::move(out), {a}, [a, offset, segments](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id());
    for (const Segment& s : segments) {
      for (int r = s.begin; r < s.end; ++r) {
        const int src = r + offset;
        if (src >= s.begin && src < s.end) ga.row(src) += g.row(r);
      }
    }
  });
}

Var attention(Var q, Var k, Var v, int heads, std::vector<AttentionBlock> blocks) {
  Tape& t = *q.tape();
  Matrix out;
  auto probs = std::make_shared<std::vector<Matrix>>();
  kernels::attention(q.value(), k.value(), v.value(), heads, blocks, out, probs.get());
  return t.record(std::move(out), {q, k, v}, [q, k, v, heads, blocks = std::move(blocks), probs](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const int d = static_cast<int>(q.cols());
    const int dh = d / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool gq = t.requires_grad(q.id());
    const bool gk = t.requires_grad(k.id());
    const bool gv = t.requires_grad(v.id());
    std::size_t idx = 0;
    for (const AttentionBlock& b : blocks) {
      const int nq = b.q_end - b.q_begin;
      const int nk = b.k_end - b.k_begin;
      for (int h = 0; h < heads; ++h, ++idx) {
        const Matrix& pm = (*probs)[idx];
        for (int r0 = 0; r0 < nq; r0 += kernels::kAttentionChunk) {
          const int rows = std::min(kernels::kAttentionChunk, nq - r0);
          const int span = b.causal ? b.visible(r0 + rows - 1) : nk;
          const auto p = pm.block(r0, 0, rows, span);
          const auto go = g.block(b.q_begin + r0, h * dh, rows, dh);
          if (gv) t.grad(v.id()).block(b.k_begin, h * dh, span, dh).noalias() += p.transpose() * go;
          if (!gq && !gk) continue;
          Matrix ds = go * v.value().block(b.k_begin, h * dh, span, dh).transpose();
          for (int i = 0; i < rows; ++i) {
            const double dot = p.row(i).dot(ds.row(i));
            ds.row(i).array() = p.row(i).array() * (ds.row(i).array() - dot) * sc;
          }
          if (gq) t.grad(q.id()).block(b.q_begin + r0, h * dh, rows, dh).noalias() +=
              ds * k.value().block(b.k_begin, h * dh, span, dh);
          if (gk) t.grad(k.id()).block(b.k_begin, h * dh, span, dh).noalias() +=
              ds.transpose() * q.value().block(b.q_begin + r0, h * dh, rows, dh);
        }
      }
    }
  });
}

Var straight_through(Var x, Var quantized) {
  check_same_shape(x, quantized, "straight_through");
  Tape& t = *x.tape();
  return t.record(quantized.value(), {x}, [x](Tape& t, int self) { accumulate(t, x, t.grad(self)); });
}

Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

Var sum(Var a) {
  Tape& t = *a.tape();
  return scalar_node(t, a.value().sum(), {a}, [a](Tape& t, int self) {
    t.grad(a.id()).array() += t.grad(self)(0, 0);
  });
}

Var mean(Var a) {
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.value().size());
  return scalar_node(t, a.value().sum() / n, {a}, [a, n](Tape& t, int self) {
    t.grad(a.id()).array() += t.grad(self)(0, 0) / n;
  });
}

Var mse(Var a, Var b) {
  check_same_shape(a, b, "mse");
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.value().size());
  auto diff = std::make_shared<Matrix>(a.value() - b.value());
  return scalar_node(t, diff->squaredNorm() / n, {a, b}, [a, b, diff, n](Tape& t, int self) {
    const double g = t.grad(self)(0, 0) * 2.0 / n;
    accumulate(t, a, *diff * g);
    if (t.requires_grad(b.id())) t.grad(b.id()) -= *diff * g;
  });
}

Var l2_rows(Var a, Var b, double eps) {
  check_same_shape(a, b, "l2_rows");
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.rows());
  auto diff = std::make_shared<Matrix>(a.value() - b.value());
  auto norms = std::make_shared<Vector>((diff->rowwise().squaredNorm().array() + eps * eps).sqrt());
  return scalar_node(t, norms->sum() / n, {a, b}, [a, b, diff, norms, n](Tape& t, int self) {
    const double g = t.grad(self)(0, 0) / n;
    Matrix d = diff->array().colwise() / norms->array();
    d *= g;
    accumulate(t, a, d);
    if (t.requires_grad(b.id())) t.grad(b.id()) -= d;
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<std::uint8_t>& mask) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  HIERMESH_CHECK(static_cast<Eigen::Index>(targets.size()) == n && static_cast<Eigen::Index>(mask.size()) == n,
                 ErrorKind::kShape, "cross_entropy: targets/mask length mismatch");
  Tape& t = *logits.tape();
  auto probs = std::make_shared<Matrix>(Matrix::Zero(n, k));
  double total = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    HIERMESH_CHECK(targets[r] >= 0 && targets[r] < k, ErrorKind::kShape,
                   "cross_entropy: target " + std::to_string(targets[r]) + " outside " + std::to_string(k));
    const double mx = logits.value().row(r).maxCoeff();
    probs->row(r) = (logits.value().row(r).array() - mx).exp();
    const double z = probs->row(r).sum();
    probs->row(r) /= z;
    total += -(logits.value()(r, targets[r]) - mx - std::log(z));
    ++count;
  }
  const double loss = count > 0 ? total / count : 0.0;
  return scalar_node(t, loss, {logits}, [logits, targets, mask, probs, count](Tape& t, int self) {
    if (count == 0) return;
    const double g = t.grad(self)(0, 0) / count;
    Matrix& gl = t.grad(logits.id());
    for (Eigen::Index r = 0; r < gl.rows(); ++r) {
      if (!mask[r]) continue;
      gl.row(r) += g * probs->row(r);
      gl(r, targets[r]) -= g;
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets) {
  return cross_entropy(logits, targets, std::vector<std::uint8_t>(targets.size(), 1));
}

Var bce_with_logits(Var logits, const std::vector<double>& targets) {
  HIERMESH_CHECK(logits.cols() == 1 && static_cast<std::size_t>(logits.rows()) == targets.size(), ErrorKind::kShape,
                 "bce_with_logits: expects (n,1) logits and n targets");
  Tape& t = *logits.tape();
  const double n = static_cast<double>(targets.size());
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double x = logits.value()(static_cast<Eigen::Index>(i), 0);
    total += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return scalar_node(t, n > 0 ? total / n : 0.0, {logits}, [logits, targets, n](Tape& t, int self) {
    if (n == 0) return;
    const double g = t.grad(self)(0, 0) / n;
    Matrix& gl = t.grad(logits.id());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double x = logits.value()(static_cast<Eigen::Index>(i), 0);
      gl(static_cast<Eigen::Index>(i), 0) += g * (1.0 / (1.0 + std::exp(-x)) - targets[i]);
    }
  });
}

Vector token_nll(const Matrix& logits, const std::vector<int>& targets) {
  HIERMESH_CHECK(static_cast<Eigen::Index>(targets.size()) == logits.rows(), ErrorKind::kShape,
                 "token_nll: target count mismatch");
  Vector out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out(r) = lse - logits(r, targets[r]);
  }
  return out;
}

}  // namespace hiermesh::nn
