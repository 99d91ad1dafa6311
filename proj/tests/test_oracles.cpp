#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "s2df/oracles.hpp"
#include "test_helpers.hpp"

namespace s2df::oracles {
namespace {

using testing::rel_err;

Primitive<3> sphere3() { return {Sphere<3>{Point3::Zero(), 0.5}, 1000.0}; }

TEST(AnalyticJet, SphereExample) {
  const auto j = analytic_jet(sphere3(), Point3(1, 0, 0));
  EXPECT_NEAR(j.value, 250.0, 1e-12);
  EXPECT_NEAR((j.grad - Point3(1000, 0, 0)).norm(), 0.0, 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(j.hess);
  bool found = false;
  for (int i = 0; i < 3; ++i)
    if (std::abs(es.eigenvalues()[i] - 2000.0) < 1e-9) {
      found = true;
      EXPECT_NEAR(std::abs(es.eigenvectors().col(i).dot(Point3::UnitX())), 1.0, 1e-12);
    }
  EXPECT_TRUE(found);
}

TEST(AnalyticJet, ZeroOnSurface) {
  const auto cloud = sample_primitive(sphere3(), 100, 4);
  for (const auto& x : cloud.points) {
    const auto j = analytic_jet(sphere3(), x);
    EXPECT_NEAR(j.value, 0.0, 1e-9);
    EXPECT_NEAR(j.grad.norm(), 0.0, 1e-9);
  }
}

TEST(AnalyticJet, CutLocusThrows) {
  EXPECT_THROW(analytic_jet(sphere3(), Point3(Point3::Zero())), NonDifferentiable);
  Primitive<2> seg{Segment<2>{Point2(-0.5, 0), Point2(0.5, 0)}, 1000.0};
  // On the extension of the segment beyond an endpoint the Hessian jumps.
  EXPECT_FALSE(is_differentiable(seg, Point2(0.5, 0.3), 1e-3));
  EXPECT_TRUE(is_differentiable(seg, Point2(0.0, 0.3), 1e-3));
  EXPECT_THROW(analytic_jet(seg, Point2(0.5, 0.3)), NonDifferentiable);
}

TEST(AnalyticJet, InvalidPrimitives) {
  EXPECT_THROW((Primitive<3>{Sphere<3>{Point3::Zero(), 0.0}, 1.0}.validate()), PreconditionError);
  EXPECT_THROW((Primitive<3>{Plane<3>{Point3::Zero(), Point3(1, 1, 0)}, 1.0}.validate()), PreconditionError);
  EXPECT_THROW((Primitive<2>{Segment<2>{Point2::Zero(), Point2::Zero()}, 1.0}.validate()), PreconditionError);
  EXPECT_THROW((Primitive<2>{Arc2{Point2::Zero(), 0.5, 1.0, 1.0}, 1.0}.validate()), PreconditionError);
}

TEST(FiniteDifference, QuadraticHessian) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    Eigen::Matrix3d a;
    for (int i = 0; i < 9; ++i) a(i) = g(rng);
    a = 0.5 * (a + a.transpose()).eval();
    auto f = [&](const Point3& x) { return x.dot(a * x); };
    const Point3 x0(g(rng), g(rng), g(rng));
    const auto j = finite_difference_jet<3>(f, x0, 1e-4);
    // Roundoff of a second difference is about eps * |f| / h^2, several 1e-8
    // at these magnitudes; the 1e-8 band only holds for |f| below about 1.
    const double roundoff = 8 * std::numeric_limits<double>::epsilon() * (std::abs(f(x0)) + 1) / 1e-8;
    EXPECT_LT((j.hess - 2 * a).cwiseAbs().maxCoeff(), std::max(1e-8, roundoff));
    EXPECT_LT((j.grad - 2 * a * x0).norm(), 1e-8 * (1 + x0.norm()));
  }
}

TEST(FiniteDifference, QuadraticNearOrigin) {
  // Small |f| keeps roundoff below the 1e-8 absolute tolerance.
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 20; ++t) {
    Eigen::Matrix3d a;
    for (int i = 0; i < 9; ++i) a(i) = g(rng);
    a = 0.5 * (a + a.transpose()).eval();
    auto f = [&](const Point3& x) { return x.dot(a * x); };
    const Point3 x0 = 1e-3 * Point3(g(rng), g(rng), g(rng));
    const auto j = finite_difference_jet<3>(f, x0, 1e-4);
    EXPECT_LT((j.hess - 2 * a).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(FiniteDifference, ConstantAndSine) {
  const auto c = finite_difference_jet<2>([](const Point2&) { return 3.0; }, Point2(0.1, 0.2));
  EXPECT_EQ(c.grad.norm(), 0.0);
  EXPECT_EQ(c.hess.norm(), 0.0);
  const Point2 x(0.37, -0.2);
  const auto s = finite_difference_jet<2>([](const Point2& p) { return std::sin(5 * p[0]); }, x, 1e-4);
  EXPECT_NEAR(s.grad[0], 5 * std::cos(5 * x[0]), 1e-6 * std::abs(5 * std::cos(5 * x[0])));
  EXPECT_EQ(s.hess, s.hess.transpose());
}

TEST(Theorem1, SphereOffSurface) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_differentiable_point(sphere3(), rng);
    const auto j = analytic_jet(sphere3(), x);
    if (j.grad.norm() < 1e-9) continue;
    const auto r = check_theorem1(j, 1000.0, 1e-12);
    EXPECT_LT(r.eigen_gap, 1e-9);
    EXPECT_GT(r.eigvec_alignment, 1 - 1e-9);
  }
}

TEST(Theorem1, SegmentInteriorNormal) {
  Primitive<2> seg{Segment<2>{Point2(-0.5, 0), Point2(0.5, 0)}, 1000.0};
  for (double y : {0.05, -0.2, 0.7}) {
    const auto j = analytic_jet(seg, Point2(0.1, y));
    const auto r = check_theorem1(j, 1000.0, 1e-12);
    EXPECT_LT(r.eigen_gap, 1e-9);
    EXPECT_GT(r.eigvec_alignment, 1 - 1e-9);
  }
}

TEST(Theorem1, ZeroHessianAndSurfaceNormal) {
  EXPECT_EQ(check_theorem1(Jet2<3>{}, 1000.0, 1e-12).eigen_gap, 1.0);
  // On the zero set the gradient vanishes and alignment uses the normal.
  const auto j = analytic_jet(sphere3(), Point3(0, 0.5, 0));
  const auto r = check_theorem1<3>(j, 1000.0, 1e-9, Point3(Point3::UnitY()));
  EXPECT_LT(r.eigen_gap, 1e-9);
  EXPECT_GT(r.eigvec_alignment, 1 - 1e-9);
}

template <int D>
void expect_identities(const Primitive<D>& prim, std::uint64_t seed) {
  const auto rep = run_identity_suite(prim, 1000, seed);
  EXPECT_EQ(rep.points, 1000u);
  EXPECT_LT(rep.max_eikonal_rel, 1e-9);
  EXPECT_LT(rep.max_eigen_gap, 1e-9);
  EXPECT_GT(rep.min_alignment, 1 - 1e-9);
  EXPECT_LT(rep.max_ma_rel, 1e-6);
  EXPECT_LT(rep.max_hgrad_rel, 1e-6);
  EXPECT_TRUE(rep.passes());
}

TEST(IdentitySuite, AllPrimitives) {
  expect_identities(sphere3(), 1);
  expect_identities(Primitive<3>{Plane<3>{Point3(0.1, 0, 0), Point3(0, 0.6, 0.8)}, 1000.0}, 2);
  expect_identities(Primitive<3>{Segment<3>{Point3(-0.3, 0, 0.1), Point3(0.4, 0.2, 0)}, 1000.0}, 3);
  expect_identities(Primitive<2>{Sphere<2>{Point2(0.1, -0.1), 0.5}, 1000.0}, 4);
  expect_identities(Primitive<2>{Plane<2>{Point2::Zero(), Point2::UnitY()}, 1000.0}, 5);
  expect_identities(Primitive<2>{Segment<2>{Point2(-0.5, 0), Point2(0.5, 0.1)}, 1000.0}, 6);
  expect_identities(Primitive<2>{Arc2{Point2::Zero(), 0.5, 0.3, 2.5}, 1000.0}, 7);
}

template <int D>
void expect_fd_agreement(const Primitive<D>& prim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto f = [&](const Point<D>& x) { return s2df_value(prim, x); };
  for (int i = 0; i < 200; ++i) {
    // Truncation error grows like h^2 / r^2 near the non-differentiable locus,
    // and relative gradient error is meaningless on the zero set.
    const auto x = random_differentiable_point(prim, rng, 1.0, 5e-2);
    if (distance(prim, x) < 1e-2) continue;
    const auto a = analytic_jet(prim, x);
    const auto n = finite_difference_jet<D>(f, x, 1e-4);
    EXPECT_LT(rel_err(n.grad, a.grad), 1e-6);
    EXPECT_LT(rel_err(n.hess, a.hess), 1e-4);
  }
}

TEST(IdentitySuite, AnalyticMatchesFiniteDifferences) {
  expect_fd_agreement(sphere3(), 11);
  expect_fd_agreement(Primitive<3>{Segment<3>{Point3(-0.3, 0, 0.1), Point3(0.4, 0.2, 0)}, 1000.0}, 12);
  expect_fd_agreement(Primitive<2>{Sphere<2>{Point2::Zero(), 0.5}, 1000.0}, 13);
  expect_fd_agreement(Primitive<2>{Arc2{Point2::Zero(), 0.5, 0.3, 2.5}, 1000.0}, 14);
}

TEST(SamplePrimitive, OnSurfaceWithUnitNormals) {
  Primitive<2> arc{Arc2{Point2::Zero(), 0.5, 0.0, 3.0}, 1000.0};
  const auto c = sample_primitive(arc, 500, 3);
  ASSERT_EQ(c.size(), 500u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(distance(arc, c.points[i]), 0.0, 1e-12);
    EXPECT_NEAR(c.normals[i].norm(), 1.0, 1e-12);
    const double ang = std::atan2(c.points[i][1], c.points[i][0]);
    EXPECT_GE(ang, -1e-12);
    EXPECT_LE(ang, 3.0 + 1e-12);
  }
}

TEST(SamplePrimitive, ArcChordPointsAreFar) {
  // Points on the chord of an open arc are far from the arc: no closure.
  Primitive<2> arc{Arc2{Point2::Zero(), 0.5, 0.25 * std::numbers::pi, 1.75 * std::numbers::pi}, 1000.0};
  EXPECT_NEAR(distance(arc, Point2(0.5, 0)), 2 * 0.5 * std::sin(std::numbers::pi / 8), 1e-12);
}

}  // namespace
}  // namespace s2df::oracles
