#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "s2df/jet_batch.hpp"
#include "s2df/oracles.hpp"
#include "s2df/siren.hpp"
#include "test_helpers.hpp"

namespace s2df {
namespace {

using testing::random_points;
using testing::rel_err;

TEST(InitSiren, PaperArchitectureDims) {
  const auto p = init_siren(3, {256, 256, 256, 256, 256}, 30.0, 1);
  EXPECT_EQ(p.dims(), (std::vector<int>{3, 256, 256, 256, 256, 256, 1}));
  EXPECT_EQ(p.layers.size(), 6u);
  p.validate();
}

TEST(InitSiren, SameSeedIsBitIdentical) {
  const auto a = init_siren(2, {32, 32}, 30.0, 42);
  const auto b = init_siren(2, {32, 32}, 30.0, 42);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_TRUE((a.layers[l].weight.array() == b.layers[l].weight.array()).all());
    EXPECT_TRUE((a.layers[l].bias.array() == b.layers[l].bias.array()).all());
  }
}

TEST(InitSiren, LayerBounds) {
  const auto p = init_siren(3, {64, 64}, 30.0, 5);
  EXPECT_LT(p.layers[0].weight.cwiseAbs().maxCoeff(), 1.0 / 3.0);
  const double hidden_bound = std::sqrt(6.0 / 64) / 30.0;
  EXPECT_LE(p.layers[1].weight.cwiseAbs().maxCoeff(), hidden_bound);
  EXPECT_LE(p.layers[2].weight.cwiseAbs().maxCoeff(), hidden_bound);
  for (const auto& l : p.layers) EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
}

TEST(InitSiren, FanInBiases) {
  const auto z = init_siren(3, {64, 64}, 30.0, 5);
  const auto p = init_siren(3, {64, 64}, 30.0, 5, 30.0, BiasInit::kUniformFanIn);
  EXPECT_EQ(p.layers[0].bias.size(), 64);
  EXPECT_LE(p.layers[0].bias.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(3.0));
  EXPECT_LE(p.layers[1].bias.cwiseAbs().maxCoeff(), 1.0 / 8.0);
  EXPECT_GT(p.layers[0].bias.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& l : z.layers) EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  // Zero biases make the network odd in x.
  const Point3 x(0.3, -0.1, 0.2);
  EXPECT_NEAR(forward_value(z, x), -forward_value(z, Point3(-x)), 1e-15);
}

TEST(InitSiren, RejectsEmptyWidths) { EXPECT_THROW(init_siren(2, {}, 30.0, 1), PreconditionError); }

TEST(ForwardJet, ZeroWeightsGiveBias) {
  auto p = init_siren(3, {8, 8}, 30.0, 1);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  p.layers.back().bias(0) = 0.75;
  const auto j = forward_jet<3>(p, Point3(0.1, -0.2, 0.3));
  EXPECT_EQ(j.value, 0.75);
  EXPECT_EQ(j.grad.norm(), 0.0);
  EXPECT_EQ(j.hess.norm(), 0.0);
}

TEST(ForwardJet, SingleSineUnit) {
  SirenParams p;
  p.input_dim = 1;
  p.omega0 = 30.0;
  p.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1)});
  p.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1)});
  const double x = 0.3, w = 30.0;
  const auto j = forward_jet<1>(p, Point<1>(x));
  EXPECT_NEAR(j.value, std::sin(w * x), 1e-15);
  EXPECT_NEAR(j.grad(0), w * std::cos(w * x), 1e-13);
  EXPECT_NEAR(j.hess(0, 0), -w * w * std::sin(w * x), 1e-11);
}

TEST(ForwardJet, MatchesFiniteDifferences) {
  const auto p = init_siren(2, {16, 16}, 30.0, 11);
  const auto pts = random_points<2>(100, 3, 0.9);
  const std::function<double(const Point2&)> f = [&](const Point2& x) { return forward_value(p, x); };
  for (const auto& x : pts) {
    const auto j = forward_jet<2>(p, x);
    const auto fd = oracles::finite_difference_jet<2>(f, x, 1e-4);
    EXPECT_EQ(j.value, forward_value(p, x));
    EXPECT_LT(rel_err(j.grad, fd.grad), 1e-5);
    EXPECT_LT(rel_err(j.hess, fd.hess), 1e-4);
  }
}

TEST(ForwardJet, HessianExactlySymmetric) {
  const auto p = init_siren(3, {32, 32, 32}, 30.0, 2);
  for (const auto& x : random_points<3>(20, 9)) {
    const auto j = forward_jet<3>(p, x);
    EXPECT_EQ((j.hess - j.hess.transpose()).cwiseAbs().maxCoeff(), 0.0);
    const auto jb = forward_jets<3>(p, std::span<const Point3>(&x, 1));
    EXPECT_EQ((jb[0].hess - jb[0].hess.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(ForwardJet, BatchedPathAgreesWithSinglePoint) {
  const auto p = init_siren(3, {24, 24, 24}, 30.0, 4);
  const auto pts = random_points<3>(300, 8);
  ExecOptions exec;
  exec.chunk_size = 64;
  const auto batch = forward_jets<3>(p, pts, exec);
  const auto values = forward_values<3>(p, pts, exec);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto j = forward_jet<3>(p, pts[i]);
    EXPECT_NEAR(batch[i].value, j.value, 1e-12 * (1 + std::abs(j.value)));
    EXPECT_NEAR(values[i], j.value, 1e-12 * (1 + std::abs(j.value)));
    EXPECT_LT(rel_err(batch[i].grad, j.grad), 1e-12);
    EXPECT_LT(rel_err(batch[i].hess, j.hess), 1e-12);
  }
}

TEST(ForwardJet, BatchedIsDeterministicAcrossThreadCounts) {
  const auto p = init_siren(2, {16, 16}, 30.0, 4);
  const auto pts = random_points<2>(1000, 8);
  ExecOptions one{1, 100}, four{4, 100};
  const auto a = forward_jets<2>(p, pts, one);
  const auto b = forward_jets<2>(p, pts, four);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(a[i].value, b[i].value);
    EXPECT_TRUE((a[i].hess.array() == b[i].hess.array()).all());
  }
}

TEST(ForwardJet, DimensionMismatchThrows) {
  const auto p = init_siren(2, {8}, 30.0, 1);
  EXPECT_THROW(forward_jet<3>(p, Point3::Zero()), PreconditionError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto p = init_siren(3, {16, 32}, 30.0, 77);
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string blob = ss.str();
  EXPECT_EQ(blob.substr(0, 5), "S2DF1");
  const auto q = read_checkpoint(ss);
  EXPECT_EQ(q.dims(), p.dims());
  EXPECT_EQ(q.omega0, p.omega0);
  EXPECT_EQ(q.hidden_omega, p.hidden_omega);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    EXPECT_TRUE((q.layers[l].weight.array() == p.layers[l].weight.array()).all());
    EXPECT_TRUE((q.layers[l].bias.array() == p.layers[l].bias.array()).all());
  }
  // Header: magic, input_dim, layer count, dims (4 values), two omegas.
  EXPECT_EQ(blob.size(), 5 + 4 + 4 + 4 * 4 + 16 + 8 * p.num_parameters());
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::stringstream bad("S2DF0garbage");
  EXPECT_THROW(read_checkpoint(bad), ParseError);
  const auto p = init_siren(2, {8}, 30.0, 1);
  std::stringstream ss;
  write_checkpoint(ss, p);
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_checkpoint(cut), ParseError);
}

}  // namespace
}  // namespace s2df
