#include "hiermesh/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hiermesh/error.hpp"

namespace hiermesh::nn::kernels {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_derivative(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void layer_norm(const Matrix& x, const RowVector& gamma, const RowVector& beta, Matrix& out, Matrix* xhat,
                Vector* inv_std) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  out.resize(n, d);
  if (xhat) xhat->resize(n, d);
  if (inv_std) inv_std->resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    RowVector h = (x.row(r).array() - mean) * inv;
    out.row(r) = h.cwiseProduct(gamma) + beta;
    if (xhat) xhat->row(r) = h;
    if (inv_std) (*inv_std)(r) = inv;
  }
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

void attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads, const std::vector<AttentionBlock>& blocks,
               Matrix& out, std::vector<Matrix>* probs) {
  const int d = static_cast<int>(q.cols());
  HIERMESH_CHECK(heads > 0 && d % heads == 0, ErrorKind::kShape, "width must divide into heads");
  HIERMESH_CHECK(k.cols() == d && v.cols() == d && k.rows() == v.rows(), ErrorKind::kShape,
                 "attention q/k/v widths differ");
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  out = Matrix::Zero(q.rows(), d);
  if (probs) probs->clear();
  for (const AttentionBlock& b : blocks) {
    const int nq = b.q_end - b.q_begin;
    const int nk = b.k_end - b.k_begin;
    HIERMESH_CHECK(nq >= 0 && nk > 0 && b.q_end <= q.rows() && b.k_end <= k.rows(), ErrorKind::kShape,
                   "attention block out of range");
    HIERMESH_CHECK(!b.causal || b.visible(0) >= 1, ErrorKind::kShape, "causal block leaves a query without keys");
    for (int h = 0; h < heads; ++h) {
      Matrix p = Matrix::Zero(nq, nk);
      for (int r0 = 0; r0 < nq; r0 += kAttentionChunk) {
        const int rows = std::min(kAttentionChunk, nq - r0);
        const int span = b.causal ? b.visible(r0 + rows - 1) : nk;
        auto s = p.block(r0, 0, rows, span);
        s.noalias() = q.block(b.q_begin + r0, h * dh, rows, dh) * k.block(b.k_begin, h * dh, span, dh).transpose();
        for (int i = 0; i < rows; ++i) {
          const int vis = b.causal ? b.visible(r0 + i) : span;
          auto row = s.row(i).head(vis);
          row *= scale;
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
          if (vis < span) s.row(i).tail(span - vis).setZero();
        }
        out.block(b.q_begin + r0, h * dh, rows, dh).noalias() += s * v.block(b.k_begin, h * dh, span, dh);
      }
      if (probs) probs->push_back(std::move(p));
    }
  }
}

}  // namespace hiermesh::nn::kernels
