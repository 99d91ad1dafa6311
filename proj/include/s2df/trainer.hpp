#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"
#include "s2df/jet_batch.hpp"
#include "s2df/losses.hpp"
#include "s2df/sampler.hpp"
#include "s2df/siren.hpp"

namespace s2df {

struct TrainConfig {
  std::size_t iterations = 10000;
  double lr0 = 3e-4;
  double decay_factor = 0.18;
  std::vector<std::size_t> decay_iters{4500, 6000, 7000, 8000, 9000};
  double K = 1000.0;
  double alpha = 500.0;
  std::string weight_preset = "open";
  LossWeights weights = LossWeights::open();
  Regularizer regularizer = Regularizer::kMongeAmpere;
  SamplerConfig sampler;
  std::uint64_t seed = 0;  // network initialization
  bool deterministic = false;

  std::vector<int> hidden{256, 256, 256, 256, 256};
  double omega0 = 30.0;
  double hidden_omega = 30.0;
  BiasInit bias_init = BiasInit::kUniformFanIn;
  // The preset MA weights balance a (2K)^3 residual. With this flag, D-dim
  // training multiplies the MA weight by (2K)^(3-D) so the weighted residual
  // has the same magnitude at initialization.
  bool ma_dimension_scaling = true;

  bool normalize = true;  // normalize the input cloud and record the transform
  ExecOptions exec;
  std::string checkpoint_dir;  // empty: no periodic checkpoints
  std::size_t checkpoint_interval = 1000;

  /// Seeds both the network initialization and the batch sampler.
  void set_seed(std::uint64_t s) {
    seed = s;
    sampler.seed = s;
  }

  void use_preset(const std::string& name) {
    weights = LossWeights::preset(name);
    weight_preset = name;
  }

  void validate() const {
    if (iterations < 1) throw PreconditionError("TrainConfig: iterations must be >= 1");
    if (!(lr0 > 0)) throw PreconditionError("TrainConfig: lr0 must be positive");
    if (!(decay_factor > 0 && decay_factor <= 1)) throw PreconditionError("TrainConfig: decay_factor must be in (0, 1]");
    for (std::size_t i = 0; i < decay_iters.size(); ++i) {
      if (i > 0 && decay_iters[i] <= decay_iters[i - 1])
        throw PreconditionError("TrainConfig: decay_iters must be strictly increasing");
      if (decay_iters[i] >= iterations) throw PreconditionError("TrainConfig: decay_iters must be < iterations");
    }
    if (!(K > 0)) throw PreconditionError("TrainConfig: K must be positive");
    if (!(alpha > 0)) throw PreconditionError("TrainConfig: alpha must be positive");
    if (hidden.empty()) throw PreconditionError("TrainConfig: hidden widths are empty");
    weights.validate();
    sampler.validate();
  }
};

/// The default milestones {4500, ..., 9000} of a 10k run, rescaled to
/// `iterations` (rounded, duplicates and out-of-range entries dropped).
inline std::vector<std::size_t> scaled_decay_iters(std::size_t iterations) {
  std::vector<std::size_t> out;
  for (std::size_t m : TrainConfig{}.decay_iters) {
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(m) * iterations / 10000.0));
    if (s >= 1 && s < iterations && (out.empty() || s > out.back())) out.push_back(s);
  }
  return out;
}

/// Loss weights actually used for a D-dimensional run.
template <int D>
LossWeights effective_weights(const TrainConfig& cfg) {
  LossWeights w = cfg.weights;
  if (cfg.ma_dimension_scaling) w.ma *= std::pow(2.0 * cfg.K, 3 - D);
  return w;
}

/// lr0 * decay_factor^(number of decay milestones <= iter).
inline double lr_at(const TrainConfig& cfg, std::size_t iter) {
  if (iter >= cfg.iterations) throw PreconditionError("lr_at: iteration out of range");
  int passed = 0;
  for (auto d : cfg.decay_iters) passed += d <= iter;
  return cfg.lr0 * std::pow(cfg.decay_factor, passed);
}

struct AdamState {
  ParamGradient m, v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const SirenParams& p) {
    AdamState s;
    s.m = ParamGradient::zeros_like(p);
    s.v = ParamGradient::zeros_like(p);
    return s;
  }
};

/// One bias-corrected Adam update in place.
inline void adam_step(SirenParams& params, const ParamGradient& grad, AdamState& st, double lr) {
  if (grad.layers.size() != params.layers.size() || st.m.layers.size() != params.layers.size())
    throw PreconditionError("adam_step: shape mismatch");
  if (!grad.all_finite()) throw NumericalFailure("gradient", "adam_step: non-finite gradient");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    if (theta.size() != g.size()) throw PreconditionError("adam_step: shape mismatch");
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grad.layers[l].weight, st.m.layers[l].weight, st.v.layers[l].weight);
    update(params.layers[l].bias, grad.layers[l].bias, st.m.layers[l].bias, st.v.layers[l].bias);
  }
}

struct HistoryRecord {
  std::size_t iter = 0;
  double lr = 0;
  LossBreakdown loss;
  double wall_ms = 0;  // since training start; 0 under the determinism flag
};

using TrainHistory = std::vector<HistoryRecord>;

inline void write_history_csv(std::ostream& os, const TrainHistory& h) {
  os << "iter,lr,ma,dirichlet,neumann,nonmanifold,total,wall_ms\n";
  os << std::setprecision(17);
  for (const auto& r : h) {
    os << r.iter << ',' << r.lr << ',' << r.loss.ma << ',' << r.loss.dirichlet << ',' << r.loss.neumann << ','
       << r.loss.nonmanifold << ',' << r.loss.total << ',' << std::setprecision(6) << r.wall_ms
       << std::setprecision(17) << '\n';
  }
}

template <int D>
struct TrainResult {
  SirenParams params;
  TrainHistory history;
  NormTransform<D> transform;
};

/// Called after every iteration; return false to stop early.
using TrainCallback = std::function<bool(const HistoryRecord&, const SirenParams&)>;

/// Training aborted by a numerical failure. The parameters from the last
/// successful step are kept (and written as `last_good.s2df` when
/// checkpointing is enabled).
struct TrainingAborted : NumericalFailure {
  TrainingAborted(const NumericalFailure& cause, SirenParams last, TrainHistory hist)
      : NumericalFailure(cause.term(), cause.what()), last_good(std::move(last)), history(std::move(hist)) {}
  SirenParams last_good;
  TrainHistory history;
};

template <int D>
TrainResult<D> train(const PointCloud<D>& input, const TrainConfig& cfg, const TrainCallback& callback = {}) {
  cfg.validate();
  validate_cloud(input);
  if (input.empty()) throw PreconditionError("train: point cloud is empty");

  TrainResult<D> out;
  PointCloud<D> cloud;
  if (cfg.normalize) {
    std::tie(cloud, out.transform) = normalize_cloud(input);
  } else {
    cloud = input;
    out.transform = NormTransform<D>{};
  }

  const LossWeights weights = effective_weights<D>(cfg);
  out.params = init_siren(D, cfg.hidden, cfg.omega0, cfg.seed, cfg.hidden_omega, cfg.bias_init);
  AdamState adam = AdamState::for_params(out.params);
  const auto start = std::chrono::steady_clock::now();
  const bool checkpoints = !cfg.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(cfg.checkpoint_dir);
  auto ckpt_path = [&](const std::string& name) {
    return (std::filesystem::path(cfg.checkpoint_dir) / name).string();
  };

  out.history.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto surface = sample_surface_batch(cloud, cfg.sampler, it);
    const auto offsurface = sample_offsurface_batch(surface, cfg.sampler, it);
    const double lr = lr_at(cfg, it);
    SirenParams before = out.params;
    try {
      auto [loss, grad] = loss_param_gradient<D>(out.params, surface, offsurface, weights, cfg.K, cfg.alpha,
                                                 cfg.regularizer, cfg.exec);
      adam_step(out.params, grad, adam, lr);
      for (const auto& l : out.params.layers)
        if (!l.weight.allFinite() || !l.bias.allFinite())
          throw NumericalFailure("parameters", "non-finite parameters after update");
      HistoryRecord rec{it, lr, loss, 0.0};
      if (!cfg.deterministic)
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out.history.push_back(rec);
    } catch (const NumericalFailure& e) {
      if (checkpoints) save_checkpoint(ckpt_path("last_good.s2df"), before);
      throw TrainingAborted(e, std::move(before), std::move(out.history));
    }
    if (checkpoints && cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0)
      save_checkpoint(ckpt_path("last.s2df"), out.params);
    if (callback && !callback(out.history.back(), out.params)) break;
  }
  if (checkpoints) save_checkpoint(ckpt_path("final.s2df"), out.params);
  return out;
}

}  // namespace s2df
