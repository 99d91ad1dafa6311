#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "s2df/geometry.hpp"
#include "s2df/losses.hpp"
#include "s2df/siren.hpp"

namespace s2df::oracles {

// Analytic primitives. `Sphere<2>` is the 2D circle.

template <int D>
struct Sphere {
  Point<D> center = Point<D>::Zero();
  double radius = 0.5;
};

template <int D>
struct Plane {
  Point<D> point = Point<D>::Zero();
  Point<D> normal = Point<D>::UnitX();
};

template <int D>
struct Segment {
  Point<D> a = Point<D>::Zero();
  Point<D> b = Point<D>::UnitX();
};

/// Circular arc in the plane spanning angles [start, end] (radians, end > start).
struct Arc2 {
  Point2 center = Point2::Zero();
  double radius = 0.5;
  double start = 0.0;
  double end = std::numbers::pi;
};

template <int D>
using Shape = std::conditional_t<D == 2, std::variant<Sphere<2>, Plane<2>, Segment<2>, Arc2>,
                                 std::variant<Sphere<D>, Plane<D>, Segment<D>>>;

template <int D>
struct Primitive {
  Shape<D> shape;
  double K = 1000.0;

  void validate() const {
    if (!(K > 0)) throw PreconditionError("Primitive: K must be positive");
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Sphere<D>>) {
            if (!(s.radius > 0)) throw PreconditionError("sphere radius must be positive");
          } else if constexpr (std::is_same_v<T, Plane<D>>) {
            if (std::abs(s.normal.norm() - 1.0) > 1e-12) throw PreconditionError("plane normal must be unit");
          } else if constexpr (std::is_same_v<T, Segment<D>>) {
            if ((s.a - s.b).norm() == 0) throw PreconditionError("segment endpoints coincide");
          } else {
            if (!(s.radius > 0)) throw PreconditionError("arc radius must be positive");
            if (!(s.end > s.start) || s.end - s.start >= 2 * std::numbers::pi)
              throw PreconditionError("arc angle range must be in (0, 2pi)");
          }
        },
        shape);
  }
};

namespace detail {

/// Angle of v relative to [start, start + 2pi).
inline double wrap_from(double angle, double start) {
  double t = std::fmod(angle - start, 2 * std::numbers::pi);
  if (t < 0) t += 2 * std::numbers::pi;
  return start + t;
}

// Local description of the distance field: nearest feature kind.
template <int D>
struct Nearest {
  Point<D> foot;  // closest surface point
  enum Kind { kRadial, kPlanar, kLine, kPoint } kind;
  Point<D> dir = Point<D>::Zero();  // line direction (kLine) or plane normal (kPlanar)
  double curvature_radius = 0;      // kRadial: radius; center stored in `center`
  Point<D> center = Point<D>::Zero();
  double margin = 0;  // distance to the nearest non-differentiability (cut locus, region switch)
};

template <int D>
Nearest<D> nearest_feature(const Primitive<D>& prim, const Point<D>& x) {
  return std::visit(
      [&](const auto& s) -> Nearest<D> {
        using T = std::decay_t<decltype(s)>;
        Nearest<D> n;
        if constexpr (std::is_same_v<T, Sphere<D>>) {
          const Point<D> v = x - s.center;
          const double r = v.norm();
          n.kind = Nearest<D>::kRadial;
          n.center = s.center;
          n.curvature_radius = s.radius;
          n.foot = r > 0 ? Point<D>(s.center + s.radius * v / r) : s.center;
          n.margin = r;
        } else if constexpr (std::is_same_v<T, Plane<D>>) {
          n.kind = Nearest<D>::kPlanar;
          n.dir = s.normal;
          n.foot = x - s.normal.dot(x - s.point) * s.normal;
          n.margin = std::numeric_limits<double>::infinity();
        } else if constexpr (std::is_same_v<T, Segment<D>>) {
          const Point<D> d = s.b - s.a;
          const double len = d.norm();
          const double tau = (x - s.a).dot(d) / (len * len);
          if (tau > 0 && tau < 1) {
            n.kind = Nearest<D>::kLine;
            n.dir = d / len;
            n.foot = s.a + tau * d;
          } else {
            n.kind = Nearest<D>::kPoint;
            n.foot = tau <= 0 ? s.a : s.b;
          }
          n.margin = std::min(std::abs(tau), std::abs(tau - 1)) * len;
        } else {
          static_assert(D == 2);
          const Point2 v = x - s.center;
          const double r = v.norm();
          const double phi = wrap_from(std::atan2(v.y(), v.x()), s.start);
          const Point2 e0 = s.center + s.radius * Point2(std::cos(s.start), std::sin(s.start));
          const Point2 e1 = s.center + s.radius * Point2(std::cos(s.end), std::sin(s.end));
          if (phi < s.end) {
            n.kind = Nearest<D>::kRadial;
            n.center = s.center;
            n.curvature_radius = s.radius;
            n.foot = r > 0 ? Point2(s.center + s.radius * v / r) : e0;
            n.margin = std::min(r, r * std::sin(std::min(std::numbers::pi / 2, std::min(phi - s.start, s.end - phi))));
          } else {
            n.kind = Nearest<D>::kPoint;
            const double d0 = (x - e0).norm(), d1 = (x - e1).norm();
            n.foot = d0 <= d1 ? e0 : e1;
            // Distance to the wedge boundary rays and to the bisector between the endpoints.
            const double to_ray =
                r * std::sin(std::min(std::numbers::pi / 2, std::min(phi - s.end, s.start + 2 * std::numbers::pi - phi)));
            const Point2 mid_dir = (e1 - e0).normalized();
            const double to_bisector = std::abs((x - 0.5 * (e0 + e1)).dot(mid_dir));
            n.margin = std::min({r, to_ray, to_bisector});
          }
        }
        return n;
      },
      prim.shape);
}

}  // namespace detail

/// Unsigned distance to the primitive.
template <int D>
double distance(const Primitive<D>& prim, const Point<D>& x) {
  return (x - detail::nearest_feature(prim, x).foot).norm();
}

/// S2DF value K * g(x)^2.
template <int D>
double s2df_value(const Primitive<D>& prim, const Point<D>& x) {
  const double g = distance(prim, x);
  return prim.K * g * g;
}

/// True when x is at least `margin` away from every point where the S2DF
/// fails to be twice differentiable (sphere center, segment end caps, arc
/// wedge boundaries and endpoint bisector).
template <int D>
bool is_differentiable(const Primitive<D>& prim, const Point<D>& x, double margin = 0.0) {
  const auto n = detail::nearest_feature(prim, x);
  return n.margin > margin;
}

/// Exact value, gradient and Hessian of the primitive's S2DF.
template <int D>
Jet2<D> analytic_jet(const Primitive<D>& prim, const Point<D>& x) {
  using Mat = Eigen::Matrix<double, D, D>;
  const auto n = detail::nearest_feature(prim, x);
  if (!(n.margin > 0)) throw NonDifferentiable("analytic_jet: query lies on a non-differentiable locus");
  const double K = prim.K;
  const Point<D> v = x - n.foot;
  Jet2<D> jet;
  jet.value = K * v.squaredNorm();
  jet.grad = 2 * K * v;
  switch (n.kind) {
    case detail::Nearest<D>::kPlanar:
      jet.hess = 2 * K * n.dir * n.dir.transpose();
      break;
    case detail::Nearest<D>::kLine:
      jet.hess = 2 * K * (Mat::Identity() - n.dir * n.dir.transpose());
      break;
    case detail::Nearest<D>::kPoint:
      jet.hess = 2 * K * Mat::Identity();
      break;
    case detail::Nearest<D>::kRadial: {
      const Point<D> w = x - n.center;
      const double r = w.norm();
      const Point<D> u = w / r;
      const Mat uu = u * u.transpose();
      jet.hess = 2 * K * (uu + (r - n.curvature_radius) / r * (Mat::Identity() - uu));
      break;
    }
  }
  return jet;
}

/// Fourth-order central-difference jet of an arbitrary scalar field, using
/// offsets h and 2h along each axis and diagonal.
template <int D>
Jet2<D> finite_difference_jet(const std::function<double(const Point<D>&)>& f, const Point<D>& x, double h = 1e-4) {
  if (!(h > 0)) throw PreconditionError("finite_difference_jet: h must be positive");
  Jet2<D> j;
  const double f0 = f(x);
  j.value = f0;
  auto at = [&](int i, double di, int k, double dk) {
    Point<D> y = x;
    y[i] += di;
    if (k >= 0) y[k] += dk;
    return f(y);
  };
  for (int i = 0; i < D; ++i) {
    const double p1 = at(i, h, -1, 0), m1 = at(i, -h, -1, 0);
    const double p2 = at(i, 2 * h, -1, 0), m2 = at(i, -2 * h, -1, 0);
    j.grad[i] = (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h);
    j.hess(i, i) = (-p2 + 16 * p1 - 30 * f0 + 16 * m1 - m2) / (12 * h * h);
  }
  // Mixed partials: Richardson combination of the 4-point cross at h and 2h.
  auto cross = [&](int i, int k, double s) {
    return (at(i, s, k, s) - at(i, s, k, -s) - at(i, -s, k, s) + at(i, -s, k, -s)) / (4 * s * s);
  };
  for (int i = 0; i < D; ++i)
    for (int k = i + 1; k < D; ++k) {
      const double v = (4 * cross(i, k, h) - cross(i, k, 2 * h)) / 3;
      j.hess(i, k) = v;
      j.hess(k, i) = v;
    }
  j.symmetrize();
  return j;
}

struct Theorem1Report {
  double eigen_gap = 1.0;        // min_i |lambda_i - 2K| / 2K
  double eigvec_alignment = 0.0;  // |cos| between the 2K eigenspace and grad (or normal)
};

/// Checks that the Hessian has an eigenvalue 2K whose eigenvector is parallel
/// to the gradient (or, on the zero-level set, to the supplied normal). When
/// the 2K eigenvalue is repeated, alignment is measured against the whole
/// eigenspace: the norm of the reference direction's projection onto it.
template <int D>
Theorem1Report check_theorem1(const Jet2<D>& jet, double K, double tol,
                              const std::optional<Point<D>>& normal = std::nullopt) {
  using Mat = Eigen::Matrix<double, D, D>;
  Eigen::SelfAdjointEigenSolver<Mat> es;
  es.compute(jet.hess);
  const auto& ev = es.eigenvalues();
  const double target = 2 * K;

  Theorem1Report rep;
  int best = 0;
  for (int i = 0; i < D; ++i) {
    const double gap = std::abs(ev[i] - target) / target;
    if (gap < rep.eigen_gap || i == 0) {
      rep.eigen_gap = gap;
      best = i;
    }
  }

  Point<D> ref;
  if (jet.grad.norm() > tol) {
    ref = jet.grad.normalized();
  } else if (normal) {
    ref = normal->normalized();
  } else {
    rep.eigvec_alignment = 0.0;
    return rep;
  }
  // Eigenspace of every eigenvalue within a small window of the best match.
  const double window = std::max(1e-6, 10 * rep.eigen_gap);
  double proj2 = 0.0;
  for (int i = 0; i < D; ++i) {
    if (std::abs(ev[i] - ev[best]) / target <= window) {
      const double c = es.eigenvectors().col(i).dot(ref);
      proj2 += c * c;
    }
  }
  rep.eigvec_alignment = std::sqrt(std::min(1.0, proj2));
  return rep;
}

/// Uniform random point in [-extent, extent]^D where the primitive's S2DF is
/// twice differentiable with at least `margin` clearance.
template <int D>
Point<D> random_differentiable_point(const Primitive<D>& prim, std::mt19937_64& rng, double extent = 1.0,
                                     double margin = 1e-3) {
  std::uniform_real_distribution<double> u(-extent, extent);
  for (;;) {
    Point<D> x;
    for (int i = 0; i < D; ++i) x[i] = u(rng);
    if (is_differentiable(prim, x, margin)) return x;
  }
}

/// Uniform surface samples of a primitive with unit normals. Planes are
/// sampled over a square patch of half-size `plane_extent` around their point.
template <int D>
PointCloud<D> sample_primitive(const Primitive<D>& prim, std::size_t n, std::uint64_t seed, double plane_extent = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud<D> out;
  out.points.reserve(n);
  out.normals.reserve(n);
  auto any_perp = [&](const Point<D>& d) {
    // Random unit vector orthogonal to d.
    for (;;) {
      Point<D> g;
      for (int i = 0; i < D; ++i) g[i] = gauss(rng);
      g -= g.dot(d) * d;
      if (g.norm() > 1e-9) return Point<D>(g.normalized());
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Sphere<D>>) {
            Point<D> g;
            do {
              for (int k = 0; k < D; ++k) g[k] = gauss(rng);
            } while (g.norm() < 1e-12);
            g.normalize();
            out.points.push_back(s.center + s.radius * g);
            out.normals.push_back(g);
          } else if constexpr (std::is_same_v<T, Plane<D>>) {
            Eigen::Matrix<double, D, D - 1> basis;
            Point<D> e = any_perp(s.normal);
            basis.col(0) = e;
            if constexpr (D == 3) basis.col(1) = s.normal.cross(e);
            Point<D> p = s.point;
            for (int k = 0; k < D - 1; ++k) p += (2 * unit(rng) - 1) * plane_extent * basis.col(k);
            out.points.push_back(p);
            out.normals.push_back(s.normal);
          } else if constexpr (std::is_same_v<T, Segment<D>>) {
            const Point<D> d = (s.b - s.a).normalized();
            out.points.push_back(s.a + unit(rng) * (s.b - s.a));
            out.normals.push_back(any_perp(d));
          } else {
            const double t = s.start + unit(rng) * (s.end - s.start);
            const Point2 u(std::cos(t), std::sin(t));
            out.points.push_back(s.center + s.radius * u);
            out.normals.push_back(u);
          }
        },
        prim.shape);
  }
  return out;
}

/// Pass/fail summary of the identity suite over random differentiable points.
struct IdentityReport {
  std::size_t points = 0;
  double max_eikonal_rel = 0;    // | |grad t|^2 - 4K t | / max(4K t, 1e-12)
  double max_eigen_gap = 0;      // from check_theorem1
  double min_alignment = 1;      // from check_theorem1
  double max_ma_rel = 0;         // |det(H - 2K I)| / (2K)^D
  double max_hgrad_rel = 0;      // |H grad - 2K grad| / (2K |grad|)

  bool passes() const {
    return max_eikonal_rel < 1e-9 && max_eigen_gap < 1e-9 && min_alignment > 1 - 1e-9 && max_ma_rel < 1e-6 &&
           max_hgrad_rel < 1e-6;
  }
};

template <int D>
IdentityReport run_identity_suite(const Primitive<D>& prim, std::size_t n, std::uint64_t seed,
                                  double extent = 1.0, double margin = 1e-3) {
  prim.validate();
  std::mt19937_64 rng(seed);
  IdentityReport rep;
  const double K = prim.K;
  for (std::size_t i = 0; i < n; ++i) {
    const Point<D> x = random_differentiable_point(prim, rng, extent, margin);
    const Jet2<D> j = analytic_jet(prim, x);
    const double eik = std::abs(j.grad.squaredNorm() - 4 * K * j.value) / std::max(4 * K * j.value, 1e-12);
    rep.max_eikonal_rel = std::max(rep.max_eikonal_rel, eik);
    const auto nf = detail::nearest_feature(prim, x);
    std::optional<Point<D>> normal;
    const Point<D> v = x - nf.foot;
    if (v.norm() > 0) normal = v.normalized();
    const auto t1 = check_theorem1(j, K, 1e-12, normal);
    rep.max_eigen_gap = std::max(rep.max_eigen_gap, t1.eigen_gap);
    rep.min_alignment = std::min(rep.min_alignment, t1.eigvec_alignment);
    rep.max_ma_rel = std::max(rep.max_ma_rel, ma_residual<D, double>(j, K) / std::pow(2 * K, D));
    if (j.grad.norm() > 0) {
      const double hg = (j.hess * j.grad - 2 * K * j.grad).norm() / (2 * K * j.grad.norm());
      rep.max_hgrad_rel = std::max(rep.max_hgrad_rel, hg);
    }
    ++rep.points;
  }
  return rep;
}

}  // namespace s2df::oracles
