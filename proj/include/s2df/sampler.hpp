#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"

namespace s2df {

struct SamplerConfig {
  std::size_t batch_size = 15000;
  double sigma = 0.01;  // normalized units
  std::uint64_t seed = 0;
  // Share of the off-surface batch drawn uniformly from [-uniform_extent,
  // uniform_extent]^D instead of around the surface. 0 keeps every off-surface
  // point in the Gaussian shell.
  double uniform_fraction = 0.0;
  double uniform_extent = 1.0;

  void validate() const {
    if (batch_size < 1) throw PreconditionError("SamplerConfig: batch_size must be >= 1");
    if (!(sigma >= 0)) throw PreconditionError("SamplerConfig: sigma must be >= 0");
    if (!(uniform_fraction >= 0 && uniform_fraction <= 1))
      throw PreconditionError("SamplerConfig: uniform_fraction must be in [0, 1]");
    if (!(uniform_extent > 0)) throw PreconditionError("SamplerConfig: uniform_extent must be positive");
  }
};

namespace detail {

// Independent streams for the surface and off-surface draws of one iteration.
inline std::mt19937_64 batch_rng(std::uint64_t seed, std::uint64_t iter, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iter), static_cast<std::uint32_t>(iter >> 32), stream};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Uniform draw with replacement from the cloud; deterministic per (seed, iter).
template <int D>
std::vector<Point<D>> sample_surface_batch(const PointCloud<D>& cloud, const SamplerConfig& cfg, std::uint64_t iter) {
  cfg.validate();
  if (cloud.empty()) throw PreconditionError("sample_surface_batch: cloud is empty");
  auto rng = detail::batch_rng(cfg.seed, iter, 0);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  std::vector<Point<D>> out(cfg.batch_size);
  for (auto& p : out) p = cloud.points[pick(rng)];
  return out;
}

/// One Gaussian-perturbed copy of each surface sample, no clipping. With a
/// nonzero uniform_fraction, the trailing share of the batch is replaced by
/// uniform draws over the sampling box.
template <int D>
std::vector<Point<D>> sample_offsurface_batch(const std::vector<Point<D>>& surface, const SamplerConfig& cfg,
                                              std::uint64_t iter) {
  cfg.validate();
  if (surface.empty()) throw PreconditionError("sample_offsurface_batch: surface batch is empty");
  std::vector<Point<D>> out(surface);
  if (cfg.sigma > 0) {
    auto rng = detail::batch_rng(cfg.seed, iter, 1);
    std::normal_distribution<double> g(0.0, cfg.sigma);
    for (auto& p : out)
      for (int i = 0; i < D; ++i) p[i] += g(rng);
  }
  const auto n_uniform = static_cast<std::size_t>(std::llround(cfg.uniform_fraction * static_cast<double>(out.size())));
  if (n_uniform > 0) {
    auto rng = detail::batch_rng(cfg.seed, iter, 2);
    std::uniform_real_distribution<double> u(-cfg.uniform_extent, cfg.uniform_extent);
    for (std::size_t k = out.size() - n_uniform; k < out.size(); ++k)
      for (int i = 0; i < D; ++i) out[k][i] = u(rng);
  }
  return out;
}

}  // namespace s2df
