#pragma once

#include <string>
#include <vector>

#include "hiermesh/codec.hpp"
#include "hiermesh/nn/checkpoint.hpp"
#include "json_util.hpp"

namespace hiermesh::detail {

json shape_to_json(const CodecShape& shape);
CodecShape shape_from_json(const json& j);

// Parses checkpoint metadata and checks its "kind" field.
json parse_metadata(const nn::Checkpoint& checkpoint, const std::string& kind);

// batch <= 0 or >= n selects every index in order; otherwise a sorted sample
// without replacement.
std::vector<int> pick_batch(int n, int batch, Rng& rng);

}  // namespace hiermesh::detail
