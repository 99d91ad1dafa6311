#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "s2df/error.hpp"

namespace s2df {

template <int D>
using Point = Eigen::Matrix<double, D, 1>;

using Point2 = Point<2>;
using Point3 = Point<3>;

/// Unoriented point samples; normals are only carried for evaluation.
template <int D>
struct PointCloud {
  std::vector<Point<D>> points;
  std::vector<Point<D>> normals;  // empty, or one unit vector per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
};

template <int D>
void validate_cloud(const PointCloud<D>& cloud) {
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw PreconditionError("point cloud contains non-finite coordinates");
  }
  if (!cloud.normals.empty()) {
    if (cloud.normals.size() != cloud.points.size())
      throw PreconditionError("normal count does not match point count");
    for (const auto& n : cloud.normals) {
      if (std::abs(n.norm() - 1.0) > 1e-6) throw PreconditionError("normals must have unit length");
    }
  }
}

/// Maps original coordinates into the normalized working domain:
/// normalized = (original - center) / scale.
template <int D>
struct NormTransform {
  Point<D> center = Point<D>::Zero();
  double scale = 1.0;  // original units per normalized unit

  Point<D> apply(const Point<D>& original) const { return (original - center) / scale; }
  Point<D> invert(const Point<D>& normalized) const { return center + scale * normalized; }
};

/// Longest bounding-box half-extent is mapped to this value.
inline constexpr double kNormalizedHalfExtent = 0.9;

/// Centers the bounding box at the origin and scales uniformly so that the
/// longest half-extent becomes 0.9. Normals are unaffected by a uniform scale.
template <int D>
std::pair<PointCloud<D>, NormTransform<D>> normalize_cloud(const PointCloud<D>& cloud) {
  if (cloud.empty()) throw PreconditionError("normalize_cloud: empty cloud");
  validate_cloud(cloud);

  Point<D> lo = cloud.points.front();
  Point<D> hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double half_extent = 0.5 * (hi - lo).maxCoeff();
  if (!(half_extent > 0.0)) throw DegenerateInput("normalize_cloud: all points coincide");

  NormTransform<D> t;
  t.center = 0.5 * (lo + hi);
  t.scale = half_extent / kNormalizedHalfExtent;

  PointCloud<D> out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  out.normals = cloud.normals;
  return {std::move(out), t};
}

template <int D>
PointCloud<D> apply_transform(const PointCloud<D>& cloud, const NormTransform<D>& t) {
  PointCloud<D> out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  out.normals = cloud.normals;
  return out;
}

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::int32_t, 3>> faces;

  bool empty() const { return faces.empty(); }
};

inline double triangle_area(const Point3& a, const Point3& b, const Point3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Uniform area-weighted surface samples; each normal is its face's unit normal.
inline PointCloud<3> sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  PointCloud<3> out;
  if (n == 0) return out;

  std::vector<double> areas(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    for (auto idx : tri) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= mesh.vertices.size())
        throw PreconditionError("sample_mesh_surface: face index out of range");
    }
    areas[f] = triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    total += areas[f];
  }
  if (!(total > 0.0)) throw DegenerateInput("sample_mesh_surface: mesh has zero total area");

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tri = mesh.faces[pick_face(rng)];
    const Point3& a = mesh.vertices[tri[0]];
    const Point3& b = mesh.vertices[tri[1]];
    const Point3& c = mesh.vertices[tri[2]];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    out.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    out.normals.push_back((b - a).cross(c - a).normalized());
  }
  return out;
}

/// Regular lattice including both bounds on every axis.
template <int D>
struct AxisGrid {
  Point<D> lower = Point<D>::Constant(-1.0);
  Point<D> upper = Point<D>::Constant(1.0);
  std::array<int, D> resolution{};

  static AxisGrid cube(double lo, double hi, int res) {
    AxisGrid g;
    g.lower = Point<D>::Constant(lo);
    g.upper = Point<D>::Constant(hi);
    g.resolution.fill(res);
    return g;
  }

  void validate() const {
    for (int a = 0; a < D; ++a) {
      if (!(lower[a] < upper[a])) throw PreconditionError("AxisGrid: lower must be < upper");
      if (resolution[a] < 2) throw PreconditionError("AxisGrid: resolution must be >= 2 per axis");
    }
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (int r : resolution) n *= static_cast<std::size_t>(r);
    return n;
  }

  double spacing(int axis) const { return (upper[axis] - lower[axis]) / (resolution[axis] - 1); }

  double cell_diagonal() const {
    double s = 0.0;
    for (int a = 0; a < D; ++a) s += spacing(a) * spacing(a);
    return std::sqrt(s);
  }

  double coord(int axis, int i) const {
    if (i == resolution[axis] - 1) return upper[axis];
    return lower[axis] + spacing(axis) * i;
  }

  /// Row-major flat index, last axis fastest.
  std::size_t flat(const std::array<int, D>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < D; ++a) f = f * resolution[a] + idx[a];
    return f;
  }

  std::array<int, D> unflatten(std::size_t f) const {
    std::array<int, D> idx{};
    for (int a = D - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(f % resolution[a]);
      f /= resolution[a];
    }
    return idx;
  }

  Point<D> point(const std::array<int, D>& idx) const {
    Point<D> p;
    for (int a = 0; a < D; ++a) p[a] = coord(a, idx[a]);
    return p;
  }

  Point<D> point(std::size_t f) const { return point(unflatten(f)); }
};

template <int D>
std::vector<Point<D>> grid_points(const AxisGrid<D>& grid) {
  grid.validate();
  std::vector<Point<D>> pts;
  pts.reserve(grid.size());
  for (std::size_t f = 0; f < grid.size(); ++f) pts.push_back(grid.point(f));
  return pts;
}

}  // namespace s2df
