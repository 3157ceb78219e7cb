#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiermesh/record.hpp"

// Checks shared by the unit tests and the acceptance runner.
namespace hiermesh::testing {

struct GradientCase {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Central-difference checks for every layer kind, the loss ops and a small
// conditioned transformer. Inputs are checked alongside parameters.
std::vector<GradientCase> gradient_suite(std::uint64_t seed = 7);

struct PrefixMaskCheck {
  int prefix_rows = 0;
  double max_analytic = 0.0;  // |d loss / d logit| over condition rows
  double max_numeric = 0.0;   // central differences at the same logits
  double max_target_grad = 0.0;  // largest gradient on a target row, for contrast
};
PrefixMaskCheck prefix_mask_check(std::uint64_t seed = 3);

struct RqPropertyReport {
  int batches = 0;
  long faces = 0;
  long violations = 0;      // faces whose depth-2 residual exceeds depth 1
  double max_ratio = 0.0;   // worst depth2 / depth1
};
// Alternates one training step with a fresh quantization batch, first for a
// small geometry codec, then for a structure codec; batches counts both.
RqPropertyReport rq_property(int batches, std::uint64_t seed = 5);

struct ConstantCheck {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  bool ok() const { return expected == actual; }
};
// Published full-scale constants against the "paper" preset and the
// compiled-in values.
std::vector<ConstantCheck> full_scale_constants();

// Synthetic objects cycling chair / table / storage with seeds 0, 1, 2, ...
// after grid quantization.
std::vector<ObjectRecord> synthetic_objects(int count);
// The `count` objects with the fewest faces among synthetic_objects(pool),
// in their original order.
std::vector<ObjectRecord> smallest_objects(int count, int pool);

int face_count(const ObjectRecord& record);

}  // namespace hiermesh::testing
