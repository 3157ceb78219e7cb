#pragma once

#include <cstdint>
#include <vector>

#include "hiermesh/metrics.hpp"

// Brute-force reference implementations, written without the library's
// k-d tree or matrix helpers.
namespace hiermesh::testing {

double brute_chamfer(const PointCloud& a, const PointCloud& b);
SetMetrics brute_set_metrics(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref);
// Rank-interpolated percentile via nth_element.
double brute_percentile(const std::vector<double>& values, double q);
// Pairwise positive-over-negative comparison, ties count one half.
double brute_auc(const std::vector<double>& scores, const std::vector<double>& labels);

struct MetricOracleReport {
  int trials = 0;
  int mismatches = 0;
  double max_difference = 0.0;
  std::string first_mismatch;
};
// Random sets of at most 10 clouds each, compared against the library.
MetricOracleReport metric_oracles(int trials, std::uint64_t seed);

// ID(X, X) for synthetic objects: max over objects and states.
double self_instantiation_distance(int objects, int states);

// 1-NNA of two independent draws from the synthetic generator, per seed.
std::vector<double> same_distribution_nna(int seeds, int set_size, std::size_t points);

}  // namespace hiermesh::testing
