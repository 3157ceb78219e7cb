#pragma once

#include <functional>
#include <vector>

#include "hiermesh/nn/tape.hpp"

namespace hiermesh::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t coordinates = 0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

// `loss` builds a fresh scalar on the tape from the current parameter values.
// Compares Tape::backward against central differences for every coordinate of
// `params` (all trainable parameters of the store when empty).
GradCheckResult gradient_check(ParameterStore& store, const std::function<Var(Tape&)>& loss, double eps = 1e-4,
                               std::vector<Parameter*> params = {});

// Scalar-function variant: f and its derivative at x.
double gradient_check_scalar(const std::function<double(double)>& f, double analytic, double x, double eps = 1e-4);

}  // namespace hiermesh::nn
