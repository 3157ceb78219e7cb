#pragma once

#include <vector>

#include "hiermesh/matrix.hpp"

namespace hiermesh::nn {

inline constexpr double kLayerNormEps = 1e-5;

// Query rows [q_begin, q_end) attend key rows [k_begin, k_end). With `causal`,
// the last query row sees every key and earlier rows see correspondingly fewer,
// so a KV-cached step and a full causal pass agree.
struct AttentionBlock {
  int q_begin = 0;
  int q_end = 0;
  int k_begin = 0;
  int k_end = 0;
  bool causal = false;

  // Number of keys visible to query row `qi` (relative to q_begin).
  int visible(int qi) const {
    const int nk = k_end - k_begin;
    if (!causal) return nk;
    return qi + 1 + (nk - (q_end - q_begin));
  }
};

// Contiguous row ranges processed independently (sequence segments).
struct Segment {
  int begin = 0;
  int end = 0;
};

// Pure Eigen kernels shared by the tape ops and the cached inference path.
namespace kernels {

double gelu(double x);
double gelu_derivative(double x);

// Writes normalized rows and per-row 1/sigma (both optional) alongside out.
void layer_norm(const Matrix& x, const RowVector& gamma, const RowVector& beta, Matrix& out, Matrix* xhat = nullptr,
                Vector* inv_std = nullptr);

void softmax_rows(Matrix& m);

// Query rows per chunk; a causal chunk stops at its last visible key.
inline constexpr int kAttentionChunk = 64;

// Multi-head scaled dot-product attention. When probs is non-null it receives
// one probability matrix per (block, head), block-major.
void attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads, const std::vector<AttentionBlock>& blocks,
               Matrix& out, std::vector<Matrix>* probs = nullptr);

}  // namespace kernels

}  // namespace hiermesh::nn
