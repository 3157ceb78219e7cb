#include "codec_io.hpp"

#include <algorithm>
#include <numeric>

#include "hiermesh/error.hpp"

namespace hiermesh::detail {

json shape_to_json(const CodecShape& shape) {
  return {{"codebook_size", shape.codebook_size},
          {"code_dim", shape.code_dim},
          {"width", shape.width},
          {"encoder_layers", shape.encoder_layers},
          {"decoder_blocks", shape.decoder_blocks}};
}

CodecShape shape_from_json(const json& j) {
  CodecShape s;
  s.codebook_size = j.at("codebook_size").get<int>();
  s.code_dim = j.at("code_dim").get<int>();
  s.width = j.at("width").get<int>();
  s.encoder_layers = j.at("encoder_layers").get<int>();
  s.decoder_blocks = j.at("decoder_blocks").get<int>();
  return s;
}

json parse_metadata(const nn::Checkpoint& checkpoint, const std::string& kind) {
  json meta;
  try {
    meta = json::parse(checkpoint.metadata);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("checkpoint metadata: ") + e.what());
  }
  HIERMESH_CHECK(meta.is_object() && meta.value("kind", std::string()) == kind, ErrorKind::kSchema,
                 "checkpoint is not a " + kind);
  return meta;
}

std::vector<int> pick_batch(int n, int batch, Rng& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  if (batch <= 0 || batch >= n) return all;
  for (int i = 0; i < batch; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  }
  all.resize(static_cast<std::size_t>(batch));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace hiermesh::detail
