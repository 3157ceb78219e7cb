#include "hiermesh/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hiermesh::nn {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult gradient_check(ParameterStore& store, const std::function<Var(Tape&)>& loss, double eps,
                               std::vector<Parameter*> params) {
  if (params.empty()) {
    for (Parameter& p : store.all()) {
      if (p.trainable) params.push_back(&p);
    }
  }
  store.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).scalar();
  };
  GradCheckResult result;
  for (Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate();
      x = saved - eps;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic, numeric));
      result.max_abs_analytic = std::max(result.max_abs_analytic, std::abs(analytic));
      ++result.coordinates;
    }
  }
  store.zero_grad();
  return result;
}

double gradient_check_scalar(const std::function<double(double)>& f, double analytic, double x, double eps) {
  const double numeric = (f(x + eps) - f(x - eps)) / (2.0 * eps);
  return relative_error(analytic, numeric);
}

}  // namespace hiermesh::nn
