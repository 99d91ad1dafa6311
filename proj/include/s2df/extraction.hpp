#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"
#include "s2df/jet_batch.hpp"
#include "s2df/mc_tables.hpp"
#include "s2df/parallel.hpp"
#include "s2df/siren.hpp"

namespace s2df {

/// Extraction grid bounds: the normalized domain padded by 3 sigma.
inline constexpr double kExtractionBound = 1.03;
inline constexpr double kDefaultIso = 5e-3;

template <int D>
struct ScalarFieldGrid {
  AxisGrid<D> grid;
  std::vector<double> values;  // grid_points order

  double at(const std::array<int, D>& idx) const { return values[grid.flat(idx)]; }

  void validate() const {
    grid.validate();
    if (values.size() != grid.size()) throw PreconditionError("ScalarFieldGrid: value count does not match grid");
    for (double v : values)
      if (!std::isfinite(v)) throw NumericalFailure("field", "ScalarFieldGrid: non-finite value");
  }
};

/// Network values at every grid node, evaluated slab by slab so large grids
/// never materialize their full point list.
template <int D>
ScalarFieldGrid<D> evaluate_grid(const SirenParams& params, const AxisGrid<D>& grid, const ExecOptions& exec = {}) {
  grid.validate();
  if (params.input_dim != D) throw PreconditionError("evaluate_grid: grid dimension does not match network input");
  ScalarFieldGrid<D> out{grid, std::vector<double>(grid.size())};
  constexpr std::size_t kSlab = 1 << 16;
  std::vector<Point<D>> pts;
  for (std::size_t lo = 0; lo < out.values.size(); lo += kSlab) {
    const std::size_t hi = std::min(out.values.size(), lo + kSlab);
    pts.resize(hi - lo);
    for (std::size_t f = lo; f < hi; ++f) pts[f - lo] = grid.point(f);
    const auto v = forward_values<D>(params, pts, exec);
    std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(lo));
  }
  out.validate();
  return out;
}

/// sqrt(max(t, 0) / K): negative network noise clamps to zero distance.
template <int D>
ScalarFieldGrid<D> s2df_to_udf(const ScalarFieldGrid<D>& field, double K) {
  if (!(K > 0)) throw PreconditionError("s2df_to_udf: K must be positive");
  ScalarFieldGrid<D> out = field;
  for (double& v : out.values) v = std::sqrt(std::max(v, 0.0) / K);
  return out;
}

/// Multilinear interpolation of the grid at p (clamped to the grid box).
template <int D>
double interpolate(const ScalarFieldGrid<D>& f, const Point<D>& p) {
  std::array<int, D> base;
  std::array<double, D> frac;
  for (int a = 0; a < D; ++a) {
    const double s = (p[a] - f.grid.lower[a]) / f.grid.spacing(a);
    const int n = f.grid.resolution[a];
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, 0, n - 2);
    base[a] = i;
    frac[a] = std::clamp(s - i, 0.0, 1.0);
  }
  double acc = 0;
  for (int corner = 0; corner < (1 << D); ++corner) {
    std::array<int, D> idx = base;
    double w = 1;
    for (int a = 0; a < D; ++a) {
      const bool up = (corner >> a) & 1;
      idx[a] += up;
      w *= up ? frac[a] : 1 - frac[a];
    }
    acc += w * f.at(idx);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// 2D: marching squares.

struct Polyline2 {
  std::vector<Point2> vertices;
  bool closed = false;
};

using Contour2 = std::vector<Polyline2>;

namespace detail {

// Crossing point on the grid edge starting at node `flat` along `axis`,
// interpolated from the lower node so neighbouring cells agree exactly.
template <int D>
Point<D> edge_crossing(const ScalarFieldGrid<D>& f, std::size_t flat, int axis, double iso) {
  auto idx = f.grid.unflatten(flat);
  const double a = f.values[flat];
  auto next = idx;
  ++next[axis];
  const double b = f.at(next);
  const double t = (iso - a) / (b - a);
  Point<D> p = f.grid.point(idx);
  p[axis] += t * f.grid.spacing(axis);
  return p;
}

}  // namespace detail

/// Contour of {udf = iso} by marching squares. Saddle cells are resolved by
/// the average of the four corners. Components come out in a fixed order.
inline Contour2 extract_iso_2d(const ScalarFieldGrid<2>& udf, double iso) {
  udf.validate();
  if (!(iso > 0)) throw PreconditionError("extract_iso_2d: iso must be positive");
  const auto& g = udf.grid;
  const int n0 = g.resolution[0], n1 = g.resolution[1];
  auto below = [&](int i, int j) { return udf.values[static_cast<std::size_t>(i) * n1 + j] < iso; };
  // Edge id: 2 * node + axis.
  auto eid = [&](int i, int j, int axis) { return (static_cast<std::uint64_t>(i) * n1 + j) * 2 + axis; };

  std::vector<std::array<std::uint64_t, 2>> segments;
  for (int i = 0; i + 1 < n0; ++i) {
    for (int j = 0; j + 1 < n1; ++j) {
      // Corners c0 (i,j) c1 (i+1,j) c2 (i+1,j+1) c3 (i,j+1).
      const bool c[4] = {below(i, j), below(i + 1, j), below(i + 1, j + 1), below(i, j + 1)};
      const std::uint64_t e[4] = {eid(i, j, 0), eid(i + 1, j, 1), eid(i, j + 1, 0), eid(i, j, 1)};
      // Edge k joins corner k and corner k+1.
      std::array<int, 4> cut{};
      int ncut = 0;
      for (int k = 0; k < 4; ++k)
        if (c[k] != c[(k + 1) % 4]) cut[ncut++] = k;
      if (ncut == 2) {
        segments.push_back({e[cut[0]], e[cut[1]]});
      } else if (ncut == 4) {
        const double center = 0.25 * (udf.values[static_cast<std::size_t>(i) * n1 + j] +
                                      udf.values[static_cast<std::size_t>(i + 1) * n1 + j] +
                                      udf.values[static_cast<std::size_t>(i + 1) * n1 + j + 1] +
                                      udf.values[static_cast<std::size_t>(i) * n1 + j + 1]);
        const bool center_below = center < iso;
        // Cut off every corner whose class differs from the center's; corner k
        // sits between edges k-1 and k.
        for (int k = 0; k < 4; ++k)
          if (c[k] != center_below) segments.push_back({e[(k + 3) % 4], e[k]});
      }
    }
  }

  // Chain segments through shared edge crossings. Every crossing touches at
  // most two segments.
  std::map<std::uint64_t, std::array<std::int64_t, 2>> adj;
  for (std::size_t s = 0; s < segments.size(); ++s)
    for (auto e : segments[s]) {
      auto [it, inserted] = adj.try_emplace(e, std::array<std::int64_t, 2>{-1, -1});
      (it->second[0] < 0 ? it->second[0] : it->second[1]) = static_cast<std::int64_t>(s);
    }
  std::vector<bool> used(segments.size(), false);
  auto point_of = [&](std::uint64_t e) {
    return detail::edge_crossing<2>(udf, static_cast<std::size_t>(e / 2), static_cast<int>(e % 2), iso);
  };

  Contour2 out;
  auto walk = [&](std::uint64_t start) {
    Polyline2 line;
    std::uint64_t cur = start;
    line.vertices.push_back(point_of(cur));
    for (;;) {
      const auto& a = adj[cur];
      std::int64_t s = -1;
      for (auto cand : a)
        if (cand >= 0 && !used[cand]) {
          s = cand;
          break;
        }
      if (s < 0) break;
      used[s] = true;
      cur = segments[s][0] == cur ? segments[s][1] : segments[s][0];
      if (cur == start) {
        line.closed = true;
        break;
      }
      const Point2 p = point_of(cur);
      if (p != line.vertices.back()) line.vertices.push_back(p);
    }
    if (line.closed && line.vertices.size() > 1 && line.vertices.front() == line.vertices.back())
      line.vertices.pop_back();
    if (line.vertices.size() >= 2) out.push_back(std::move(line));
  };
  // Open chains start at their endpoints, then the remaining loops.
  for (const auto& [e, a] : adj)
    if (a[1] < 0 && !used[a[0]]) walk(e);
  for (const auto& [e, a] : adj)
    if ((a[0] >= 0 && !used[a[0]]) || (a[1] >= 0 && !used[a[1]])) walk(e);
  return out;
}

/// `component_id,x,y` rows. A closed polyline repeats its first vertex at the end.
inline void write_contour_csv(std::ostream& os, const Contour2& contour) {
  os << "component_id,x,y\n" << std::setprecision(17);
  for (std::size_t c = 0; c < contour.size(); ++c) {
    for (const auto& p : contour[c].vertices) os << c << ',' << p.x() << ',' << p.y() << '\n';
    if (contour[c].closed && !contour[c].vertices.empty())
      os << c << ',' << contour[c].vertices.front().x() << ',' << contour[c].vertices.front().y() << '\n';
  }
}

inline Contour2 read_contour_csv(std::istream& is, const std::string& name = "<contour>") {
  Contour2 out;
  std::string line;
  std::size_t lineno = 0;
  long current = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("component_id", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long c;
    double x, y;
    char s1, s2;
    if (!(ls >> c >> s1 >> x >> s2 >> y) || s1 != ',' || s2 != ',' || c < 0)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected component_id,x,y");
    if (c != current) {
      if (c < current) throw ParseError(name + ":" + std::to_string(lineno) + ": component ids must not decrease");
      out.emplace_back();
      current = c;
    }
    out.back().vertices.emplace_back(x, y);
  }
  for (auto& l : out) {
    if (l.vertices.size() > 2 && l.vertices.front() == l.vertices.back()) {
      l.vertices.pop_back();
      l.closed = true;
    }
  }
  return out;
}

/// Total length, including the closing edge of closed polylines.
inline double contour_length(const Contour2& contour) {
  double len = 0;
  for (const auto& l : contour) {
    for (std::size_t i = 0; i + 1 < l.vertices.size(); ++i) len += (l.vertices[i + 1] - l.vertices[i]).norm();
    if (l.closed && l.vertices.size() > 2) len += (l.vertices.front() - l.vertices.back()).norm();
  }
  return len;
}

/// Uniform-by-length samples on the contour with unit normals.
inline PointCloud<2> sample_contour(const Contour2& contour, std::size_t n, std::uint64_t seed) {
  struct Seg {
    Point2 a, b;
  };
  std::vector<Seg> segs;
  std::vector<double> lengths;
  for (const auto& l : contour) {
    const std::size_t m = l.vertices.size();
    const std::size_t count = l.closed && m > 2 ? m : m - 1;
    for (std::size_t i = 0; i < count; ++i) {
      const Point2 a = l.vertices[i], b = l.vertices[(i + 1) % m];
      const double len = (b - a).norm();
      if (len > 0) {
        segs.push_back({a, b});
        lengths.push_back(len);
      }
    }
  }
  if (segs.empty()) throw DegenerateInput("sample_contour: contour has zero length");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(lengths.begin(), lengths.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud<2> out;
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segs[pick(rng)];
    const Point2 d = (s.b - s.a).normalized();
    out.points.push_back(s.a + u(rng) * (s.b - s.a));
    out.normals.emplace_back(-d.y(), d.x());
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3D: marching cubes.

namespace detail {

// Corner offsets and edge endpoints matching the lookup-table layout.
inline constexpr int kMcCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kMcEdge[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                       {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

/// Merges vertices closer than `tol` (Chebyshev), keeps the first occurrence,
/// drops faces that collapse or have area below `min_area`, and compacts.
inline TriangleMesh weld_and_clean(const TriangleMesh& in, double tol, double min_area) {
  std::vector<std::int32_t> rep(in.vertices.size());
  std::unordered_map<std::uint64_t, std::vector<std::int32_t>> buckets;
  auto key = [&](long x, long y, long z) {
    return (static_cast<std::uint64_t>(x) * 73856093ULL) ^ (static_cast<std::uint64_t>(y) * 19349663ULL) ^
           (static_cast<std::uint64_t>(z) * 83492791ULL);
  };
  for (std::size_t v = 0; v < in.vertices.size(); ++v) {
    const Point3& p = in.vertices[v];
    const long cx = std::lround(std::floor(p.x() / tol)), cy = std::lround(std::floor(p.y() / tol)),
               cz = std::lround(std::floor(p.z() / tol));
    std::int32_t found = -1;
    for (long dx = -1; dx <= 1 && found < 0; ++dx)
      for (long dy = -1; dy <= 1 && found < 0; ++dy)
        for (long dz = -1; dz <= 1 && found < 0; ++dz) {
          auto it = buckets.find(key(cx + dx, cy + dy, cz + dz));
          if (it == buckets.end()) continue;
          for (auto w : it->second)
            if ((in.vertices[w] - p).cwiseAbs().maxCoeff() <= tol) {
              found = w;
              break;
            }
        }
    if (found >= 0) {
      rep[v] = found;
    } else {
      rep[v] = static_cast<std::int32_t>(v);
      buckets[key(cx, cy, cz)].push_back(static_cast<std::int32_t>(v));
    }
  }
  TriangleMesh out;
  std::vector<std::int32_t> remap(in.vertices.size(), -1);
  for (const auto& f : in.faces) {
    const std::array<std::int32_t, 3> r{rep[f[0]], rep[f[1]], rep[f[2]]};
    if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2]) continue;
    if (triangle_area(in.vertices[r[0]], in.vertices[r[1]], in.vertices[r[2]]) < min_area) continue;
    std::array<std::int32_t, 3> g;
    for (int k = 0; k < 3; ++k) {
      if (remap[r[k]] < 0) {
        remap[r[k]] = static_cast<std::int32_t>(out.vertices.size());
        out.vertices.push_back(in.vertices[r[k]]);
      }
      g[k] = remap[r[k]];
    }
    out.faces.push_back(g);
  }
  return out;
}

}  // namespace detail

/// Marching cubes on {udf = iso}. Around a zero set this yields the
/// two-sheet offset shell. Vertices on shared grid edges are shared.
inline TriangleMesh extract_iso_3d(const ScalarFieldGrid<3>& udf, double iso, const ExecOptions& exec = {}) {
  using namespace detail;
  udf.validate();
  if (!(iso > 0)) throw PreconditionError("extract_iso_3d: iso must be positive");
  const auto& g = udf.grid;
  const int n0 = g.resolution[0], n1 = g.resolution[1], n2 = g.resolution[2];

  // Per slab: triangles as triples of global edge ids (3 * node + axis).
  std::vector<std::vector<std::array<std::uint64_t, 3>>> slabs(static_cast<std::size_t>(n0 - 1));
  parallel_for(slabs.size(), exec.threads, [&](std::size_t si) {
    const int i = static_cast<int>(si);
    auto& tris = slabs[si];
    for (int j = 0; j + 1 < n1; ++j)
      for (int k = 0; k + 1 < n2; ++k) {
        int cube = 0;
        std::array<std::size_t, 8> node;
        for (int c = 0; c < 8; ++c) {
          node[c] = g.flat({i + kMcCorner[c][0], j + kMcCorner[c][1], k + kMcCorner[c][2]});
          if (udf.values[node[c]] < iso) cube |= 1 << c;
        }
        if (kMcEdgeTable[cube] == 0) continue;
        std::array<std::uint64_t, 12> eid{};
        for (int e = 0; e < 12; ++e) {
          const int a = kMcEdge[e][0], b = kMcEdge[e][1];
          int axis = 0;
          while (kMcCorner[a][axis] == kMcCorner[b][axis]) ++axis;
          eid[e] = 3 * static_cast<std::uint64_t>(node[a]) + axis;  // a is the lower endpoint
        }
        for (int t = 0; kMcTriTable[cube][t] != -1; t += 3)
          tris.push_back({eid[kMcTriTable[cube][t]], eid[kMcTriTable[cube][t + 1]], eid[kMcTriTable[cube][t + 2]]});
      }
  });

  TriangleMesh raw;
  std::unordered_map<std::uint64_t, std::int32_t> vertex_of;
  for (const auto& tris : slabs)
    for (const auto& t : tris) {
      std::array<std::int32_t, 3> f;
      for (int k = 0; k < 3; ++k) {
        auto [it, inserted] = vertex_of.try_emplace(t[k], static_cast<std::int32_t>(raw.vertices.size()));
        if (inserted)
          raw.vertices.push_back(edge_crossing<3>(udf, static_cast<std::size_t>(t[k] / 3), static_cast<int>(t[k] % 3), iso));
        f[k] = it->second;
      }
      raw.faces.push_back(f);
    }
  return weld_and_clean(raw, 1e-9, 1e-12);
}

template <int D>
void write_grid_csv(std::ostream& os, const ScalarFieldGrid<D>& f) {
  os << (D == 2 ? "i,j,value\n" : "i,j,k,value\n") << std::setprecision(17);
  for (std::size_t n = 0; n < f.values.size(); ++n) {
    const auto idx = f.grid.unflatten(n);
    for (int a = 0; a < D; ++a) os << idx[a] << ',';
    os << f.values[n] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Mesh topology helpers.

/// Connected components by shared vertices; returns a component id per face.
inline std::vector<int> face_components(const TriangleMesh& m, int* count = nullptr) {
  std::vector<int> parent(m.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& f : m.faces) {
    const int a = find(f[0]);
    for (int k = 1; k < 3; ++k) {
      const int b = find(f[k]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::unordered_map<int, int> id;
  std::vector<int> comp(m.faces.size());
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    const int r = find(m.faces[i][0]);
    auto [it, inserted] = id.try_emplace(r, static_cast<int>(id.size()));
    comp[i] = it->second;
  }
  if (count) *count = static_cast<int>(id.size());
  return comp;
}

struct ComponentTopology {
  std::size_t vertices = 0, edges = 0, faces = 0;
  std::size_t boundary_edges = 0;  // edges used by one face
  long euler() const { return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces); }
};

inline std::vector<ComponentTopology> component_topology(const TriangleMesh& m) {
  int count = 0;
  const auto comp = face_components(m, &count);
  std::vector<ComponentTopology> out(count);
  std::vector<std::vector<std::int32_t>> verts(count);
  std::map<std::pair<std::int32_t, std::int32_t>, int> edge_use;
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    const auto& f = m.faces[i];
    ++out[comp[i]].faces;
    for (int k = 0; k < 3; ++k) {
      verts[comp[i]].push_back(f[k]);
      const auto e = std::minmax(f[k], f[(k + 1) % 3]);
      ++edge_use[{e.first, e.second}];
    }
  }
  for (int c = 0; c < count; ++c) {
    std::sort(verts[c].begin(), verts[c].end());
    out[c].vertices = static_cast<std::size_t>(std::unique(verts[c].begin(), verts[c].end()) - verts[c].begin());
  }
  // Component of an edge = component of any face using its first vertex.
  std::vector<int> vcomp(m.vertices.size(), -1);
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    for (auto v : m.faces[i]) vcomp[v] = comp[i];
  for (const auto& [e, uses] : edge_use) {
    auto& t = out[vcomp[e.first]];
    ++t.edges;
    if (uses == 1) ++t.boundary_edges;
  }
  return out;
}

}  // namespace s2df
