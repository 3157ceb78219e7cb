#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hiermesh/nn/kernels.hpp"
#include "hiermesh/nn/tape.hpp"

namespace hiermesh::nn {

using Groups = std::vector<std::vector<int>>;

Var matmul(Var a, Var b);
// x * w + b with w stored (in, out) and b (1, out).
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcast (1, d) over rows

Var relu(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
Var layer_norm(Var x, Var gamma, Var beta);

// out.row(i) = table.row(indices[i]).
Var gather_rows(Var table, std::vector<int> indices);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, int begin, int count);
Var slice_cols(Var a, int begin, int count);
// Row-major reinterpretation.
Var reshape(Var a, int rows, int cols);

// out.row(i) = mean of a.rows(groups[i]); empty groups give zero rows.
Var aggregate_mean(Var a, std::shared_ptr<const Groups> groups);
// Row shift within each segment with zero fill: out[r] = a[r + offset].
Var shift_rows(Var a, int offset, const std::vector<Segment>& segments);

Var attention(Var q, Var k, Var v, int heads, std::vector<AttentionBlock> blocks);

// Value of `quantized`, gradient routed to `x`.
Var straight_through(Var x, Var quantized);
Var stop_gradient(Var a);

Var sum(Var a);
Var mean(Var a);
// Scalar-valued losses.
Var mse(Var a, Var b);
// Mean over rows of sqrt(|a_r - b_r|^2 + eps^2).
Var l2_rows(Var a, Var b, double eps = 1e-8);
// Mean negative log-softmax over rows with mask != 0. All-masked gives 0.
Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<std::uint8_t>& mask);
Var cross_entropy(Var logits, const std::vector<int>& targets);
// Logits (n, 1); targets in {0, 1}.
Var bce_with_logits(Var logits, const std::vector<double>& targets);

// Per-row negative log-likelihood without reduction (no gradient).
Vector token_nll(const Matrix& logits, const std::vector<int>& targets);

}  // namespace hiermesh::nn
