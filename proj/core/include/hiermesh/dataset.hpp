#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hiermesh/matrix.hpp"
#include "hiermesh/record.hpp"

namespace hiermesh {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kDefaultMaxFaces = 700;

// Parametric articulated furniture (chair | table | storage), normalized into
// [0,1]^3 with parts in canonical order. Deterministic per (category, seed).
ObjectRecord generate_synthetic_object(std::string_view category, std::uint64_t seed);

// Directory layout: object.json plus part_<id>.obj per part.
std::string object_to_json(const ObjectRecord& record);  // object.json contents
void save_object(const ObjectRecord& record, const std::filesystem::path& dir);
ObjectRecord load_object(const std::filesystem::path& dir);

// Rejects (nullopt) when any part has >= max_faces faces.
std::optional<ObjectRecord> filter_parts(const ObjectRecord& record, int max_faces = kDefaultMaxFaces);

struct AugmentConfig {
  double shift_range = 0.05;
  std::pair<double, double> scale_range{0.9, 1.1};
};

// One global shift plus a per-axis scale about the object center, applied to
// meshes, boxes and joints. Re-normalizes if the result leaves [0,1]^3.
ObjectRecord augment(const ObjectRecord& record, std::uint64_t seed, double shift_range,
                     std::pair<double, double> scale_range);
inline ObjectRecord augment(const ObjectRecord& record, std::uint64_t seed, const AugmentConfig& config = {}) {
  return augment(record, seed, config.shift_range, config.scale_range);
}

// Snaps part meshes onto the 128^3 grid (bin centers), welds, drops collapsed
// faces and restores canonical part order.
ObjectRecord quantize_object(const ObjectRecord& record);

// Deterministic unit vector standing in for a text-encoder label feature.
Vector label_embedding(std::string_view label);

class LabelTable {
 public:
  // Built over label_set(); throws if two labels are more similar than 0.3.
  static const LabelTable& standard();

  const std::vector<std::string>& labels() const { return labels_; }
  const Matrix& embeddings() const { return embeddings_; }  // one unit row per label
  double max_abs_cosine() const;

 private:
  LabelTable();
  std::vector<std::string> labels_;
  Matrix embeddings_;
};

// Object directories directly below root (those holding object.json), sorted.
std::vector<std::filesystem::path> list_object_dirs(const std::filesystem::path& root);

}  // namespace hiermesh
