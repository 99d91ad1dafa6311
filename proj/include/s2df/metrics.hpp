#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"
#include "s2df/parallel.hpp"

namespace s2df {

/// Exact nearest-neighbour kd-tree. Ties resolve to the smallest point index.
template <int D>
class NnIndex {
 public:
  explicit NnIndex(std::vector<Point<D>> points) : pts_(std::move(points)) {
    if (pts_.empty()) throw PreconditionError("NnIndex: empty point set");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * pts_.size() / kLeaf + 2);
    build(0, pts_.size());
  }

  struct Hit {
    std::size_t index;
    double distance;
  };

  Hit nearest(const Point<D>& q) const {
    Best best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
    search(0, q, best);
    return {best.index, std::sqrt(best.d2)};
  }

  std::size_t size() const { return pts_.size(); }
  const std::vector<Point<D>>& points() const { return pts_; }

 private:
  static constexpr std::size_t kLeaf = 8;

  struct Node {
    std::size_t lo, hi;       // range in order_
    int axis = -1;            // -1 for leaves
    double split = 0;
    std::int64_t left = -1, right = -1;
  };

  struct Best {
    double d2;
    std::size_t index;
  };

  std::int64_t build(std::size_t lo, std::size_t hi) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back({lo, hi});
    if (hi - lo <= kLeaf) return id;
    Point<D> mn = pts_[order_[lo]], mx = mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(pts_[order_[i]]);
      mx = mx.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    if (mx[axis] == mn[axis]) return id;  // all coincident: keep as a leaf
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) { return pts_[a][axis] < pts_[b][axis]; });
    const double split = pts_[order_[mid]][axis];
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    const auto l = build(lo, mid);
    const auto r = build(mid, hi);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(std::int64_t id, const Point<D>& q, Best& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.lo; i < n.hi; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (pts_[idx] - q).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) best = {d2, idx};
      }
      return;
    }
    // Left holds coordinates <= split, right >= split.
    const double diff = q[n.axis] - n.split;
    const auto near = diff <= 0 ? n.left : n.right;
    const auto far = diff <= 0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.d2) search(far, q, best);
  }

  std::vector<Point<D>> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Nearest-neighbour hits of every query point, in query order.
template <int D>
std::vector<typename NnIndex<D>::Hit> nearest_all(const NnIndex<D>& index, const std::vector<Point<D>>& queries,
                                                  int threads = 0) {
  std::vector<typename NnIndex<D>::Hit> out(queries.size());
  constexpr std::size_t kChunk = 4096;
  parallel_for((queries.size() + kChunk - 1) / kChunk, threads, [&](std::size_t c) {
    const std::size_t hi = std::min(queries.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < hi; ++i) out[i] = index.nearest(queries[i]);
  });
  return out;
}

struct MetricReport {
  double cd_l1_x1e3 = 0;
  double nc_percent = 0;  // NaN when either cloud lacks normals
  double fscore_percent = 0;
  double threshold = 0.008;
};

inline constexpr double kDefaultFscoreTau = 0.008;

namespace detail {

template <int D>
struct Matching {
  std::vector<typename NnIndex<D>::Hit> a_to_b, b_to_a;
};

template <int D>
Matching<D> match(const PointCloud<D>& a, const PointCloud<D>& b, int threads) {
  if (a.empty() || b.empty()) throw PreconditionError("metrics: point clouds must be non-empty");
  const NnIndex<D> ib(b.points), ia(a.points);
  return {nearest_all(ib, a.points, threads), nearest_all(ia, b.points, threads)};
}

template <typename Hits, typename F>
double mean_of(const Hits& hits, F&& f) {
  double s = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) s += f(i, hits[i]);
  return s / static_cast<double>(hits.size());
}

template <int D>
double chamfer_from(const Matching<D>& m) {
  auto dist = [](std::size_t, const auto& h) { return h.distance; };
  return 1e3 * 0.5 * (mean_of(m.a_to_b, dist) + mean_of(m.b_to_a, dist));
}

template <int D>
double nc_from(const PointCloud<D>& a, const PointCloud<D>& b, const Matching<D>& m) {
  auto ab = [&](std::size_t i, const auto& h) { return std::abs(a.normals[i].dot(b.normals[h.index])); };
  auto ba = [&](std::size_t i, const auto& h) { return std::abs(b.normals[i].dot(a.normals[h.index])); };
  return 100.0 * 0.5 * (mean_of(m.a_to_b, ab) + mean_of(m.b_to_a, ba));
}

template <int D>
double fscore_from(const Matching<D>& m, double tau) {
  auto within = [&](std::size_t, const auto& h) { return h.distance <= tau ? 1.0 : 0.0; };
  const double precision = mean_of(m.a_to_b, within);
  const double recall = mean_of(m.b_to_a, within);
  return precision + recall > 0 ? 100.0 * 2 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace detail

/// 10^3 * (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2.
template <int D>
double chamfer_l1(const PointCloud<D>& a, const PointCloud<D>& b, int threads = 0) {
  return detail::chamfer_from(detail::match(a, b, threads));
}

/// 100 * mean absolute cosine between each normal and its nearest
/// neighbour's normal, averaged over both directions.
template <int D>
double normal_consistency(const PointCloud<D>& a, const PointCloud<D>& b, int threads = 0) {
  if (!a.has_normals() || !b.has_normals()) throw PreconditionError("normal_consistency: both clouds need normals");
  return detail::nc_from(a, b, detail::match(a, b, threads));
}

/// 100 * harmonic mean of precision (A within tau of B) and recall.
template <int D>
double f_score(const PointCloud<D>& a, const PointCloud<D>& b, double tau = kDefaultFscoreTau, int threads = 0) {
  if (!(tau > 0)) throw PreconditionError("f_score: tau must be positive");
  return detail::fscore_from(detail::match(a, b, threads), tau);
}

/// All three metrics from one pair of nearest-neighbour passes.
template <int D>
MetricReport evaluate_metrics(const PointCloud<D>& recon, const PointCloud<D>& truth, double tau = kDefaultFscoreTau,
                              int threads = 0) {
  if (!(tau > 0)) throw PreconditionError("evaluate_metrics: tau must be positive");
  const auto m = detail::match(recon, truth, threads);
  MetricReport r;
  r.threshold = tau;
  r.cd_l1_x1e3 = detail::chamfer_from(m);
  r.nc_percent = recon.has_normals() && truth.has_normals() ? detail::nc_from(recon, truth, m)
                                                             : std::numeric_limits<double>::quiet_NaN();
  r.fscore_percent = detail::fscore_from(m, tau);
  return r;
}

inline void write_metric_header(std::ostream& os) { os << "shape,cd_x1e3,nc,fscore,tau,n_samples,seed\n"; }

inline void write_metric_row(std::ostream& os, const std::string& shape, const MetricReport& r, std::size_t n_samples,
                             std::uint64_t seed) {
  os << std::setprecision(17) << shape << ',' << r.cd_l1_x1e3 << ',' << r.nc_percent << ',' << r.fscore_percent << ','
     << r.threshold << ',' << n_samples << ',' << seed << '\n';
}

}  // namespace s2df
