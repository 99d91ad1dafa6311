#pragma once

#include <random>
#include <vector>

#include "s2df/geometry.hpp"

namespace s2df::testing {

template <int D>
std::vector<Point<D>> random_points(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Point<D>> pts(n);
  for (auto& p : pts)
    for (int i = 0; i < D; ++i) p[i] = u(rng);
  return pts;
}

/// Frobenius-norm relative error, with `floor` guarding near-zero references.
template <typename A, typename B>
double rel_err(const A& got, const B& ref, double floor = 1e-12) {
  return (got - ref).norm() / std::max(ref.norm(), floor);
}

}  // namespace s2df::testing
