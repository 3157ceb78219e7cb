#include "hiermesh/rq.hpp"

#include <algorithm>
#include <numeric>

#include "hiermesh/error.hpp"

namespace hiermesh {

std::vector<int> nearest_codes(const Matrix& x, const Matrix& codebook) {
  HIERMESH_CHECK(codebook.rows() > 0, ErrorKind::kConfig, "empty codebook");
  HIERMESH_CHECK(codebook.cols() == x.cols(), ErrorKind::kShape, "codebook dimension mismatch");
  const Vector norms = codebook.rowwise().squaredNorm();
  const Matrix dots = x * codebook.transpose();
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    // |x - c|^2 up to the row constant |x|^2.
    int best = 0;
    double best_d = norms(0) - 2.0 * dots(r, 0);
    for (Eigen::Index k = 1; k < codebook.rows(); ++k) {
      const double d = norms(k) - 2.0 * dots(r, k);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

RqResult residual_quantize(const Matrix& z, const Matrix& codebook, int depth) {
  HIERMESH_CHECK(depth > 0, ErrorKind::kConfig, "quantization depth must be positive");
  RqResult out;
  out.depth = depth;
  out.codes.assign(static_cast<std::size_t>(z.rows() * depth), 0);
  out.quantized = Matrix::Zero(z.rows(), z.cols());
  out.residual_norms.resize(z.rows(), depth);
  const bool has_zero_code = codebook.rows() > 0 && codebook.row(0).isZero(0.0);
  Matrix residual = z;
  for (int l = 0; l < depth; ++l) {
    out.stage_inputs.push_back(residual);
    const std::vector<int> idx = nearest_codes(residual, codebook);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      int k = idx[static_cast<std::size_t>(r)];
      // The expanded-distance argmin can lose to the zero code by rounding.
      if (has_zero_code && k != 0 && (residual.row(r) - codebook.row(k)).squaredNorm() > residual.row(r).squaredNorm()) {
        k = 0;
      }
      out.codes[static_cast<std::size_t>(r * depth + l)] = k;
      out.quantized.row(r) += codebook.row(k);
      residual.row(r) -= codebook.row(k);
    }
    out.residual_norms.col(l) = residual.rowwise().norm();
  }
  return out;
}

Codebook::Codebook(nn::ParameterStore& store, const std::string& name, const CodebookConfig& config)
    : config_(config) {
  HIERMESH_CHECK(config.size >= 2 && config.dim > 0, ErrorKind::kConfig, "codebook needs >= 2 codes");
  entries_ = &store.add(name + ".entries", Matrix::Zero(config.size, config.dim), false);
  ema_count_ = &store.add(name + ".ema_count", Matrix::Ones(1, config.size), false);
  ema_sum_ = &store.add(name + ".ema_sum", Matrix::Zero(config.size, config.dim), false);
  usage_ = &store.add(name + ".usage", Matrix::Zero(1, config.size), false);
  state_ = &store.add(name + ".state", Matrix::Zero(1, 2), false);
}

RqResult Codebook::quantize(const Matrix& z, int depth) const { return residual_quantize(z, entries(), depth); }

Matrix Codebook::lookup_sum(const std::vector<int>& codes, int depth) const {
  HIERMESH_CHECK(depth > 0 && codes.size() % static_cast<std::size_t>(depth) == 0, ErrorKind::kStructural,
                 "code count not divisible by depth");
  const auto rows = static_cast<Eigen::Index>(codes.size() / static_cast<std::size_t>(depth));
  Matrix out = Matrix::Zero(rows, config_.dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int l = 0; l < depth; ++l) {
      const int k = codes[static_cast<std::size_t>(r * depth + l)];
      HIERMESH_CHECK(k >= 0 && k < config_.size, ErrorKind::kStructural,
                     "code " + std::to_string(k) + " outside codebook of " + std::to_string(config_.size));
      out.row(r) += entries().row(k);
    }
  }
  return out;
}

int Codebook::active_codes() const { return static_cast<int>((usage().array() > 0.0).count()); }

void Codebook::seed_codes(const std::vector<int>& which, const RqResult& result, Rng& rng) {
  std::vector<const Matrix*> pools;
  Eigen::Index total = 0;
  for (const Matrix& m : result.stage_inputs) {
    pools.push_back(&m);
    total += m.rows();
  }
  if (total == 0) return;
  for (int k : which) {
    auto pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(total)));
    std::size_t p = 0;
    while (pick >= pools[p]->rows()) pick -= pools[p++]->rows();
    RowVector v = pools[p]->row(pick);
    for (Eigen::Index c = 0; c < v.size(); ++c) v(c) += 1e-3 * rng.normal();
    entries_->value.row(k) = v;
    ema_sum_->value.row(k) = v;
    ema_count_->value(0, k) = 1.0;
  }
}

void Codebook::update(const RqResult& result, Rng& rng) {
  const int k_total = config_.size;
  std::vector<int> free_codes(static_cast<std::size_t>(k_total - 1));
  std::iota(free_codes.begin(), free_codes.end(), 1);
  if (!initialized()) {
    seed_codes(free_codes, result, rng);
    state_->value(0, 0) = 1.0;
    return;
  }

  Vector counts = Vector::Zero(k_total);
  Matrix sums = Matrix::Zero(k_total, config_.dim);
  for (int l = 0; l < result.depth; ++l) {
    const Matrix& input = result.stage_inputs[static_cast<std::size_t>(l)];
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
      const int k = result.code(static_cast<int>(r), l);
      counts(k) += 1.0;
      sums.row(k) += input.row(r);
    }
  }
  const double d = config_.decay;
  for (int k = 1; k < k_total; ++k) {
    ema_count_->value(0, k) = d * ema_count_->value(0, k) + (1.0 - d) * counts(k);
    ema_sum_->value.row(k) = d * ema_sum_->value.row(k) + (1.0 - d) * sums.row(k);
  }
  // Laplace-smoothed cluster sizes keep rarely used codes finite.
  const double n = ema_count_->value.rightCols(k_total - 1).sum();
  for (int k = 1; k < k_total; ++k) {
    const double smoothed =
        (ema_count_->value(0, k) + config_.epsilon) / (n + k_total * config_.epsilon) * n;
    entries_->value.row(k) = ema_sum_->value.row(k) / smoothed;
  }
  entries_->value.row(0).setZero();
  usage_->value.row(0) += counts.transpose();

  state_->value(0, 1) += 1.0;
  if (state_->value(0, 1) >= config_.dead_window) {
    std::vector<int> dead;
    for (int k = 1; k < k_total; ++k) {
      if (usage_->value(0, k) < config_.dead_threshold) dead.push_back(k);
    }
    seed_codes(dead, result, rng);
    usage_->value.setZero();
    state_->value(0, 1) = 0.0;
  }
}

}  // namespace hiermesh
