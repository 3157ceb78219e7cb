#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hiermesh/nn/optim.hpp"
#include "hiermesh/nn/tape.hpp"

namespace hiermesh::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: "HMCK", u32 version, u64 metadata length, metadata (JSON
// text), u64 tensor count, then per tensor: u32 name length, name, i64 rows,
// i64 cols, rows*cols little-endian doubles (row-major).
struct Checkpoint {
  std::string metadata = "{}";
  std::vector<NamedTensor> tensors;

  const Matrix* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Every parameter (trainable or buffer) under prefix + name.
void add_parameters(Checkpoint& checkpoint, const ParameterStore& store, const std::string& prefix = "");
// Requires every parameter of the store to be present with matching shape.
void load_parameters(ParameterStore& store, const Checkpoint& checkpoint, const std::string& prefix = "");

// 16 hex digits of FNV-1a over the file bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace hiermesh::nn
