#include <gtest/gtest.h>

#include <random>

#include "s2df/geometry.hpp"

namespace s2df {
namespace {

TEST(NormalizeCloud, FixedPoint) {
  PointCloud<3> c;
  c.points = {Point3(-0.9, -0.9, -0.9), Point3(0.9, 0.9, 0.9), Point3(0.1, 0.2, -0.3)};
  const auto [n, t] = normalize_cloud(c);
  EXPECT_NEAR(t.center.norm(), 0.0, 1e-15);
  EXPECT_NEAR(t.scale, 1.0, 1e-15);
}

TEST(NormalizeCloud, TwoPoints) {
  PointCloud<3> c;
  c.points = {Point3(0, 0, 0), Point3(10, 0, 0)};
  const auto [n, t] = normalize_cloud(c);
  EXPECT_NEAR((t.center - Point3(5, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(t.scale, 10.0 / 1.8, 1e-12);
  EXPECT_NEAR((n.points[0] - Point3(-0.9, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((n.points[1] - Point3(0.9, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(NormalizeCloud, DegenerateAndRoundTrip) {
  PointCloud<2> same;
  same.points = {Point2(1, 1), Point2(1, 1)};
  EXPECT_THROW(normalize_cloud(same), DegenerateInput);
  EXPECT_THROW(normalize_cloud(PointCloud<2>{}), PreconditionError);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(3, 7);
  PointCloud<3> c;
  for (int i = 0; i < 300; ++i) c.points.emplace_back(g(rng), g(rng), g(rng));
  const auto [n, t] = normalize_cloud(c);
  double max_abs = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    max_abs = std::max(max_abs, n.points[i].cwiseAbs().maxCoeff());
    EXPECT_LE((t.invert(n.points[i]) - c.points[i]).norm(), 1e-10 * c.points[i].norm());
  }
  EXPECT_NEAR(max_abs, 0.9, 1e-12);
}

TEST(SampleMesh, CentroidOfTriangle) {
  TriangleMesh m;
  m.vertices = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  const auto c = sample_mesh_surface(m, 10000, 1);
  ASSERT_EQ(c.size(), 10000u);
  Point3 mean = Point3::Zero();
  for (const auto& p : c.points) mean += p;
  mean /= 10000.0;
  EXPECT_LT((mean - Point3(1.0 / 3, 1.0 / 3, 0)).norm(), 0.02);
  EXPECT_NEAR(std::abs(c.normals[0].z()), 1.0, 1e-12);
  EXPECT_EQ(sample_mesh_surface(m, 0, 1).size(), 0u);
}

TEST(SampleMesh, AreaWeighting) {
  TriangleMesh m;
  // Face 0 area 1, face 1 area 3.
  m.vertices = {Point3(0, 0, 0), Point3(2, 0, 0), Point3(0, 1, 0), Point3(0, 0, 5), Point3(3, 0, 5),
                Point3(0, 2, 5)};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  const auto c = sample_mesh_surface(m, 100000, 7);
  std::size_t hits = 0;
  for (const auto& p : c.points) hits += p.z() > 2.5;
  EXPECT_NEAR(hits / 100000.0, 0.75, 0.01);
  // Determinism.
  const auto d = sample_mesh_surface(m, 100, 7);
  const auto e = sample_mesh_surface(m, 100, 7);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(d.points[i], e.points[i]);
}

TEST(SampleMesh, DegenerateMesh) {
  TriangleMesh m;
  m.vertices = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0)};
  m.faces = {{0, 1, 2}};
  EXPECT_THROW(sample_mesh_surface(m, 10, 1), DegenerateInput);
}

TEST(GridPoints, Examples) {
  AxisGrid<1> g1;
  g1.lower << 0.0;
  g1.upper << 1.0;
  g1.resolution = {3};
  const auto p1 = grid_points(g1);
  ASSERT_EQ(p1.size(), 3u);
  EXPECT_EQ(p1[0][0], 0.0);
  EXPECT_EQ(p1[1][0], 0.5);
  EXPECT_EQ(p1[2][0], 1.0);

  const auto p2 = grid_points(AxisGrid<2>::cube(0.0, 1.0, 2));
  ASSERT_EQ(p2.size(), 4u);
  EXPECT_EQ(p2[0], Point2(0, 0));
  EXPECT_EQ(p2[1], Point2(0, 1));
  EXPECT_EQ(p2[2], Point2(1, 0));
  EXPECT_EQ(p2[3], Point2(1, 1));

  EXPECT_EQ(AxisGrid<3>::cube(-1, 1, 256).size(), 16777216u);
}

TEST(GridPoints, UniformSpacingAndValidation) {
  const auto g = AxisGrid<2>::cube(-1.03, 1.03, 101);
  const auto pts = grid_points(g);
  for (int i = 0; i + 1 < 101; ++i) EXPECT_NEAR(g.coord(0, i + 1) - g.coord(0, i), g.spacing(0), 1e-12);
  EXPECT_EQ(pts.front(), Point2(-1.03, -1.03));
  EXPECT_EQ(pts.back(), Point2(1.03, 1.03));
  EXPECT_THROW(AxisGrid<2>::cube(1, -1, 4).validate(), PreconditionError);
  EXPECT_THROW(AxisGrid<2>::cube(-1, 1, 1).validate(), PreconditionError);
}

}  // namespace
}  // namespace s2df
