#include "hiermesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hiermesh/articulation.hpp"
#include "hiermesh/error.hpp"
#include "hiermesh/rng.hpp"

namespace hiermesh {

KdTree::KdTree(const std::vector<Point3>& points) : points_(points) {
  std::vector<int> ids(points_.size());
  std::iota(ids.begin(), ids.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(ids, 0, static_cast<int>(ids.size()), 0);
}

int KdTree::build(std::vector<int>& ids, int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end, [&](int a, int b) {
    const double pa = points_[static_cast<std::size_t>(a)][axis];
    const double pb = points_[static_cast<std::size_t>(b)][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({ids[static_cast<std::size_t>(mid)], axis, -1, -1});
  const int left = build(ids, begin, mid, depth + 1);
  const int right = build(ids, mid + 1, end, depth + 1);
  nodes_[static_cast<std::size_t>(node)].left = left;
  nodes_[static_cast<std::size_t>(node)].right = right;
  return node;
}

void KdTree::search(int node, const Point3& q, int& best, double& best_sq) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Point3& p = points_[static_cast<std::size_t>(n.point)];
  const double d = (p - q).squaredNorm();
  if (d < best_sq || (d == best_sq && n.point < best)) {
    best_sq = d;
    best = n.point;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best, best_sq);
  // <= keeps equal-distance candidates with lower indices reachable.
  if (diff * diff <= best_sq) search(far, q, best, best_sq);
}

std::pair<int, double> KdTree::nearest(const Point3& query) const {
  HIERMESH_CHECK(root_ >= 0, ErrorKind::kDegenerateInput, "nearest neighbour in an empty set");
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, query, best, best_sq);
  return {best, std::sqrt(best_sq)};
}

namespace {

double directed_mean(const PointCloud& from, const KdTree& to) {
  double total = 0.0;
  for (const Point3& p : from.points) total += to.nearest(p).second;
  return total / static_cast<double>(from.count());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  HIERMESH_CHECK(a.count() > 0 && b.count() > 0, ErrorKind::kDegenerateInput, "chamfer of an empty cloud");
  const KdTree ta(a.points);
  const KdTree tb(b.points);
  return directed_mean(a, tb) + directed_mean(b, ta);
}

PointCloud sample_surface(const std::vector<IndexedMesh>& meshes, std::size_t n, std::uint64_t seed) {
  return sample_surface_points(concatenate(meshes), n, seed);
}

double mesh_chamfer(const IndexedMesh& a, const IndexedMesh& b, std::size_t n_points, std::uint64_t seed) {
  return chamfer(sample_surface_points(a, n_points, seed), sample_surface_points(b, n_points, seed));
}

SetMetrics set_metrics(const Matrix& gen_ref, const Matrix& gen_gen, const Matrix& ref_ref) {
  const Eigen::Index g = gen_ref.rows();
  const Eigen::Index r = gen_ref.cols();
  HIERMESH_CHECK(g > 0 && r > 0, ErrorKind::kDegenerateInput, "set metrics need non-empty sets");
  HIERMESH_CHECK(gen_gen.rows() == g && gen_gen.cols() == g && ref_ref.rows() == r && ref_ref.cols() == r,
                 ErrorKind::kShape, "set metrics: distance matrix shapes disagree");
  HIERMESH_CHECK(g + r >= 2, ErrorKind::kDegenerateInput, "1-NNA needs at least two shapes");
  SetMetrics out;
  double mmd = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) mmd += gen_ref.col(j).minCoeff();
  out.mmd = mmd / static_cast<double>(r);

  std::vector<bool> covered(static_cast<std::size_t>(r), false);
  for (Eigen::Index i = 0; i < g; ++i) {
    Eigen::Index j;
    gen_ref.row(i).minCoeff(&j);  // first index on ties
    covered[static_cast<std::size_t>(j)] = true;
  }
  out.cov = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(r);

  // Union ordered gen then ref.
  auto dist = [&](Eigen::Index a, Eigen::Index b) {
    if (a < g && b < g) return gen_gen(a, b);
    if (a < g) return gen_ref(a, b - g);
    if (b < g) return gen_ref(b, a - g);
    return ref_ref(a - g, b - g);
  };
  const Eigen::Index n = g + r;
  int correct = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < n; ++b) {
      if (b == a) continue;
      const double d = dist(a, b);
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    correct += (best < g) == (a < g);
  }
  out.nna = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

Matrix chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b) {
  std::vector<KdTree> ta;
  std::vector<KdTree> tb;
  for (const auto& c : a) ta.emplace_back(c.points);
  for (const auto& c : b) tb.emplace_back(c.points);
  Matrix out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = directed_mean(a[i], tb[j]) + directed_mean(b[j], ta[i]);
    }
  }
  return out;
}

SetMetrics set_metrics(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref) {
  return set_metrics(chamfer_matrix(gen, ref), chamfer_matrix(gen, gen), chamfer_matrix(ref, ref));
}

double instantiation_distance(const ObjectRecord& x, const ObjectRecord& y, const InstantiationConfig& config,
                              std::vector<double>* per_state) {
  HIERMESH_CHECK(!x.parts.empty() && !y.parts.empty(), ErrorKind::kValidation, "cannot articulate an empty record");
  const auto sx = instantiation_states(config.states, static_cast<int>(x.parts.size()));
  const auto sy = instantiation_states(config.states, static_cast<int>(y.parts.size()));
  double total = 0.0;
  if (per_state) per_state->clear();
  for (int k = 0; k < config.states; ++k) {
    const bool boxes = config.mode == InstantiationMode::kAabb;
    const auto mx = boxes ? articulate_boxes(x, sx[static_cast<std::size_t>(k)]) : articulate_object(x, sx[static_cast<std::size_t>(k)]);
    const auto my = boxes ? articulate_boxes(y, sy[static_cast<std::size_t>(k)]) : articulate_object(y, sy[static_cast<std::size_t>(k)]);
    const std::uint64_t seed = mix_seed(config.seed, static_cast<std::uint64_t>(k));
    const double d = chamfer(sample_surface(mx, config.points, seed), sample_surface(my, config.points, seed));
    if (per_state) per_state->push_back(d);
    total += d;
  }
  return total / config.states;
}

double percentile(std::vector<double> values, double q) {
  HIERMESH_CHECK(!values.empty(), ErrorKind::kDegenerateInput, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NoveltyReport novelty_percentiles(const Matrix& gen_train) {
  HIERMESH_CHECK(gen_train.rows() > 0 && gen_train.cols() > 0, ErrorKind::kDegenerateInput,
                 "novelty needs non-empty sets");
  NoveltyReport out;
  for (Eigen::Index i = 0; i < gen_train.rows(); ++i) {
    Eigen::Index j;
    out.distances.push_back(gen_train.row(i).minCoeff(&j));
    out.nearest.push_back(static_cast<int>(j));
  }
  out.p10 = percentile(out.distances, 10.0);
  out.p50 = percentile(out.distances, 50.0);
  out.p90 = percentile(out.distances, 90.0);
  return out;
}

NoveltyReport novelty_percentiles(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& train) {
  return novelty_percentiles(chamfer_matrix(gen, train));
}

double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  HIERMESH_CHECK(scores.size() == labels.size(), ErrorKind::kShape, "roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0.0;
  double positives = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  HIERMESH_CHECK(positives > 0 && negatives > 0, ErrorKind::kDegenerateInput, "roc_auc needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

}  // namespace hiermesh
