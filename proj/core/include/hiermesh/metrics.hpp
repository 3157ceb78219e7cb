#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hiermesh/matrix.hpp"
#include "hiermesh/mesh.hpp"
#include "hiermesh/record.hpp"

namespace hiermesh {

// Static 3-d tree for nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Point3>& points);

  // (index, Euclidean distance) of the nearest point; lowest index on ties.
  std::pair<int, double> nearest(const Point3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& ids, int begin, int end, int depth);
  void search(int node, const Point3& q, int& best, double& best_sq) const;

  std::vector<Point3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Symmetric, unsquared: mean NN distance a->b plus mean NN distance b->a.
double chamfer(const PointCloud& a, const PointCloud& b);

// Area-weighted samples over several meshes treated as one surface.
PointCloud sample_surface(const std::vector<IndexedMesh>& meshes, std::size_t n, std::uint64_t seed);
// Chamfer between surface samples of two meshes (same seed on both sides).
double mesh_chamfer(const IndexedMesh& a, const IndexedMesh& b, std::size_t n_points, std::uint64_t seed);

struct SetMetrics {
  double mmd = 0.0;
  double cov = 0.0;
  double nna = 0.0;  // 1-NNA accuracy in [0, 1]
};

// gen_ref: |gen| x |ref|; gen_gen and ref_ref are the within-set matrices
// needed by 1-NNA. Ties resolve to the lowest index of gen-then-ref order.
SetMetrics set_metrics(const Matrix& gen_ref, const Matrix& gen_gen, const Matrix& ref_ref);
Matrix chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b);
SetMetrics set_metrics(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref);

enum class InstantiationMode { kMesh, kAabb };

struct InstantiationConfig {
  int states = 10;
  std::size_t points = 2048;
  InstantiationMode mode = InstantiationMode::kMesh;
  std::uint64_t seed = 0;
};

// Mean over synchronized articulation states of the chamfer between surface
// samples (part meshes for ID, part boxes for AID). Returns per-state values
// through `per_state` when given.
double instantiation_distance(const ObjectRecord& x, const ObjectRecord& y, const InstantiationConfig& config = {},
                              std::vector<double>* per_state = nullptr);

// Linear interpolation between closest ranks; q in [0, 100].
double percentile(std::vector<double> values, double q);

struct NoveltyReport {
  std::vector<double> distances;  // per generated shape, min chamfer to train
  std::vector<int> nearest;       // index of that train shape
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};
NoveltyReport novelty_percentiles(const Matrix& gen_train);
NoveltyReport novelty_percentiles(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& train);

// Area under the ROC curve with tied scores counted as half.
double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels);

}  // namespace hiermesh
