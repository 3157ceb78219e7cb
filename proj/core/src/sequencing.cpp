#include "hiermesh/sequencing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hiermesh/dataset.hpp"
#include "hiermesh/error.hpp"

namespace hiermesh {

OrderedFaceSequence canonical_face_order(const IndexedMesh& mesh, int owner_part) {
  const std::size_t n = mesh.vertices.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return zyx_less(mesh.vertices[a], mesh.vertices[b]); });
  std::vector<int> new_index(n);
  OrderedFaceSequence out;
  out.mesh.vertices.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    new_index[order[k]] = static_cast<int>(k);
    out.mesh.vertices.push_back(mesh.vertices[order[k]]);
  }
  out.mesh.faces.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    Face g{new_index[f[0]], new_index[f[1]], new_index[f[2]]};
    const auto lead = std::min_element(g.begin(), g.end()) - g.begin();
    std::rotate(g.begin(), g.begin() + lead, g.end());
    out.mesh.faces.push_back(g);
  }
  std::sort(out.mesh.faces.begin(), out.mesh.faces.end());
  out.owner_part.assign(out.mesh.faces.size(), owner_part);
  return out;
}

std::vector<int> order_parts(const std::vector<Aabb>& aabbs) {
  std::vector<int> order(aabbs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return zyx_less(aabbs[a].min, aabbs[b].min); });
  return order;
}

IndexedMesh aabb_to_triangles(const Aabb& box) {
  HIERMESH_CHECK((box.extent().array() > 0.0).all(), ErrorKind::kDegenerateInput,
                 "cannot triangulate a degenerate box");
  IndexedMesh mesh;
  // Corner index = zbit * 4 + ybit * 2 + xbit, which is already (z, y, x) sorted.
  for (int c = 0; c < 8; ++c) {
    mesh.vertices.emplace_back((c & 1) ? box.max.x() : box.min.x(), (c & 2) ? box.max.y() : box.min.y(),
                               (c & 4) ? box.max.z() : box.min.z());
  }
  const std::array<std::array<int, 4>, 6> quads = {{
      {0, 1, 3, 2},  // z min
      {4, 5, 7, 6},  // z max
      {0, 1, 5, 4},  // y min
      {2, 3, 7, 6},  // y max
      {0, 2, 6, 4},  // x min
      {1, 3, 7, 5},  // x max
  }};
  const Point3 center = box.center();
  for (auto quad : quads) {
    const Point3& a = mesh.vertices[quad[0]];
    const Point3& b = mesh.vertices[quad[1]];
    const Point3& c = mesh.vertices[quad[2]];
    const Point3 quad_center =
        0.25 * (a + b + c + mesh.vertices[quad[3]]);
    if ((b - a).cross(c - a).dot(quad_center - center) < 0.0) std::reverse(quad.begin(), quad.end());
    // quad[0..3] is cyclic; lead with the smallest corner and split through it.
    const auto lead = std::min_element(quad.begin(), quad.end()) - quad.begin();
    std::rotate(quad.begin(), quad.begin() + lead, quad.end());
    mesh.faces.push_back({quad[0], quad[1], quad[2]});
    mesh.faces.push_back({quad[0], quad[2], quad[3]});
  }
  return mesh;
}

int quantize_scalar(double x) {
  if (!(x > 0.0)) return 0;  // also maps NaN to bin 0
  const double scaled = std::floor(x * kGridResolution);
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kGridResolution - 1)));
}

double dequantize_scalar(int bin) { return (static_cast<double>(bin) + 0.5) / kGridResolution; }

QuantizedCoord quantize(const Point3& p) {
  return {{quantize_scalar(p.x()), quantize_scalar(p.y()), quantize_scalar(p.z())}};
}

Point3 dequantize(const QuantizedCoord& q) {
  return {dequantize_scalar(q.bin[0]), dequantize_scalar(q.bin[1]), dequantize_scalar(q.bin[2])};
}

IndexedMesh quantize_mesh(const IndexedMesh& mesh) {
  IndexedMesh snapped = mesh;
  for (Point3& v : snapped.vertices) v = dequantize(quantize(v));
  return merge_close_vertices(snapped, 0.0);
}

FaceBins face_bins(const IndexedMesh& mesh, const Face& face) {
  FaceBins bins{};
  for (int k = 0; k < 3; ++k) {
    const QuantizedCoord q = quantize(mesh.vertices[face[k]]);
    for (int a = 0; a < 3; ++a) bins[3 * k + a] = q.bin[a];
  }
  return bins;
}

void positional_encoding(double x, double* out) {
  double freq = M_PI;
  for (int k = 0; k < kPositionalBands; ++k) {
    out[2 * k] = std::sin(freq * x);
    out[2 * k + 1] = std::cos(freq * x);
    freq *= 2.0;
  }
}

Matrix geometric_face_features(const IndexedMesh& mesh) {
  Matrix out(static_cast<Eigen::Index>(mesh.faces.size()), kGeometricFeatureWidth);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    std::array<Point3, 3> p;
    for (int k = 0; k < 3; ++k) p[k] = dequantize(quantize(mesh.vertices[face[k]]));
    double* row = out.row(static_cast<Eigen::Index>(f)).data();
    int col = 0;
    for (int k = 0; k < 3; ++k) {
      for (int a = 0; a < 3; ++a) {
        positional_encoding(p[k][a], row + col);
        col += kPositionalPerScalar;
      }
    }
    row[col++] = face_area(p[0], p[1], p[2]);
    for (double angle : face_angles(p[0], p[1], p[2])) row[col++] = angle;
    const Point3 normal = face_normal(p[0], p[1], p[2]);
    for (int a = 0; a < 3; ++a) row[col++] = normal[a];
  }
  return out;
}

GeometrySequence build_geometry_sequence(const IndexedMesh& mesh) {
  GeometrySequence seq;
  seq.faces = canonical_face_order(mesh);
  seq.bins.reserve(seq.faces.mesh.faces.size());
  for (const Face& f : seq.faces.mesh.faces) seq.bins.push_back(face_bins(seq.faces.mesh, f));
  seq.features = geometric_face_features(seq.faces.mesh);
  return seq;
}

GeometrySequence build_geometry_sequence(const PartRecord& part) {
  GeometrySequence seq = build_geometry_sequence(part.mesh);
  std::fill(seq.faces.owner_part.begin(), seq.faces.owner_part.end(), part.part_id);
  return seq;
}

StructureSequence build_structure_sequence(const ObjectRecord& record) {
  StructureSequence seq;
  const int n = static_cast<int>(record.parts.size());
  seq.part_count = n;
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * kFacesPerBox;
  seq.label.resize(rows, kLabelFeatureDim);
  seq.geometry.setZero(rows, kGeometryFeatureDim);
  seq.articulation.setZero(rows, kArticulationFeatureWidth);
  seq.orientation.resize(n, 3);
  seq.label_target.resize(n, kLabelFeatureDim);
  seq.geometry_target.setZero(n, kGeometryFeatureDim);

  for (int i = 0; i < n; ++i) {
    const PartRecord& part = record.parts[i];
    const OrderedFaceSequence box = canonical_face_order(aabb_to_triangles(part.aabb), i);
    const int offset = static_cast<int>(seq.faces.mesh.vertices.size());
    seq.faces.mesh.vertices.insert(seq.faces.mesh.vertices.end(), box.mesh.vertices.begin(),
                                   box.mesh.vertices.end());
    for (const Face& f : box.mesh.faces) {
      seq.faces.mesh.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
      seq.faces.owner_part.push_back(i);
      seq.bins.push_back(face_bins(box.mesh, f));
    }

    const Vector label = label_embedding(part.label);
    seq.label_target.row(i) = label.transpose();
    if (part.geometry_feature) {
      for (int k = 0; k < kGeometryFeatureDim; ++k) seq.geometry_target(i, k) = (*part.geometry_feature)[k];
    }
    const QuantizedCoord loc = quantize(part.joint.location);
    seq.joint_type.push_back(static_cast<int>(part.joint.type));
    seq.exists.push_back(part.joint.exists ? 1 : 0);
    seq.joint_location_bins.push_back(loc.bin);
    seq.orientation.row(i) = part.joint.orientation.transpose();

    RowVector articulation = RowVector::Zero(kArticulationFeatureWidth);
    articulation(static_cast<int>(part.joint.type)) = 1.0;
    articulation(kJointTypeCount) = part.joint.exists ? 1.0 : 0.0;
    for (int a = 0; a < 3; ++a) articulation(kJointTypeCount + 1 + a) = part.joint.orientation[a];
    const Point3 loc_center = dequantize(loc);
    for (int a = 0; a < 3; ++a) {
      positional_encoding(loc_center[a], articulation.data() + kJointTypeCount + 4 + a * kPositionalPerScalar);
    }
    for (int r = 0; r < kFacesPerBox; ++r) {
      const Eigen::Index row = static_cast<Eigen::Index>(i) * kFacesPerBox + r;
      seq.label.row(row) = label.transpose();
      seq.geometry.row(row) = seq.geometry_target.row(i);
      seq.articulation.row(row) = articulation;
    }
  }
  seq.geometric = geometric_face_features(seq.faces.mesh);
  return seq;
}

}  // namespace hiermesh
