#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"

namespace s2df {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Sine MLP: hidden layers compute sin(omega * (W x + b)), the head is affine.
/// The first layer uses `omega0`, later hidden layers `hidden_omega`.
struct SirenParams {
  int input_dim = 0;
  double omega0 = 30.0;
  double hidden_omega = 30.0;
  std::vector<DenseLayer> layers;

  std::size_t num_hidden() const { return layers.empty() ? 0 : layers.size() - 1; }

  double omega(std::size_t layer) const { return layer == 0 ? omega0 : hidden_omega; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  std::vector<int> dims() const {
    std::vector<int> d{input_dim};
    for (const auto& l : layers) d.push_back(static_cast<int>(l.weight.rows()));
    return d;
  }

  void validate() const {
    if (layers.empty()) throw PreconditionError("SirenParams: no layers");
    long in = input_dim;
    for (const auto& l : layers) {
      if (l.weight.cols() != in || l.bias.size() != l.weight.rows())
        throw PreconditionError("SirenParams: layer dimensions do not chain");
      if (!l.weight.allFinite() || !l.bias.allFinite())
        throw PreconditionError("SirenParams: non-finite parameter");
      in = l.weight.rows();
    }
    if (in != 1) throw PreconditionError("SirenParams: final layer must have one output");
  }
};

/// Gradient of a scalar loss with respect to every weight and bias.
struct ParamGradient {
  std::vector<DenseLayer> layers;

  static ParamGradient zeros_like(const SirenParams& p) {
    ParamGradient g;
    g.layers.reserve(p.layers.size());
    for (const auto& l : p.layers) {
      g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
  }

  ParamGradient& operator+=(const ParamGradient& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }

  ParamGradient& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
};

/// Bias initialization. The SIREN reference keeps the framework default
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases make the network an odd
/// function of x.
enum class BiasInit { kZero, kUniformFanIn };

/// SIREN initialization. First layer ~ U(-1/in, 1/in); later layers
/// ~ U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0).
inline SirenParams init_siren(int input_dim, const std::vector<int>& hidden, double omega0,
                              std::uint64_t seed, double hidden_omega = 30.0,
                              BiasInit bias_init = BiasInit::kZero) {
  if (hidden.empty()) throw PreconditionError("init_siren: hidden width list is empty");
  if (input_dim < 1) throw PreconditionError("init_siren: input_dim must be positive");
  SirenParams p;
  p.input_dim = input_dim;
  p.omega0 = omega0;
  p.hidden_omega = hidden_omega;

  std::mt19937_64 rng(seed);
  int in = input_dim;
  std::vector<int> outs = hidden;
  outs.push_back(1);
  for (std::size_t l = 0; l < outs.size(); ++l) {
    const double bound = l == 0 ? 1.0 / in : std::sqrt(6.0 / in) / omega0;
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(outs[l], in), Eigen::VectorXd::Zero(outs[l])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    if (bias_init == BiasInit::kUniformFanIn) {
      const double b = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> bdist(-b, b);
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = bdist(rng);
    }
    p.layers.push_back(std::move(layer));
    in = outs[l];
  }
  return p;
}

/// Value, gradient and Hessian of a scalar field at one point.
template <int D, typename Scalar = double>
struct Jet2 {
  using Vec = Eigen::Matrix<Scalar, D, 1>;
  using Mat = Eigen::Matrix<Scalar, D, D>;

  Scalar value = 0;
  Vec grad = Vec::Zero();
  Mat hess = Mat::Zero();

  void symmetrize() { hess = (0.5 * (hess + hess.transpose())).eval(); }
};

/// Plain forward pass.
template <typename Scalar = double, typename Derived>
Scalar forward_value(const SirenParams& params, const Eigen::MatrixBase<Derived>& x) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec u = x.template cast<Scalar>();
  const std::size_t hidden = params.num_hidden();
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto& layer = params.layers[l];
    const Scalar w = static_cast<Scalar>(params.omega(l));
    Vec a = w * (layer.weight.template cast<Scalar>() * u + layer.bias.template cast<Scalar>());
    u = a.array().sin().matrix();
  }
  const auto& head = params.layers.back();
  return (head.weight.template cast<Scalar>() * u)(0) + static_cast<Scalar>(head.bias(0));
}

/// Exact second-order jet of the network at x, by layerwise propagation.
/// Affine layers map jets linearly; for u = sin(a):
///   grad u = cos(a) grad a,  hess u = cos(a) hess a - sin(a) grad a grad a^T.
template <int D, typename Scalar = double>
Jet2<D, Scalar> forward_jet(const SirenParams& params, const Point<D>& x) {
  if (params.input_dim != D) throw PreconditionError("forward_jet: dimension mismatch");
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  constexpr int P = D * (D + 1) / 2;

  // Per unit: value, D gradient entries, upper-triangular Hessian entries.
  Vec value = x.template cast<Scalar>();
  Mat grad = Mat::Identity(D, D);  // units x D
  Mat hess = Mat::Zero(D, P);      // units x P

  const std::size_t hidden = params.num_hidden();
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto& layer = params.layers[l];
    const Scalar w = static_cast<Scalar>(params.omega(l));
    const Mat W = layer.weight.template cast<Scalar>();
    const Vec a = w * (W * value + layer.bias.template cast<Scalar>());
    const Mat ga = w * (W * grad);
    const Mat ha = w * (W * hess);
    const Vec s = a.array().sin().matrix();
    const Vec c = a.array().cos().matrix();

    Mat gu = c.asDiagonal() * ga;
    Mat hu = c.asDiagonal() * ha;
    int k = 0;
    for (int i = 0; i < D; ++i)
      for (int j = i; j < D; ++j, ++k)
        hu.col(k).array() -= s.array() * ga.col(i).array() * ga.col(j).array();
    value = s;
    grad = std::move(gu);
    hess = std::move(hu);
  }

  const auto& head = params.layers.back();
  const Mat W = head.weight.template cast<Scalar>();
  Jet2<D, Scalar> jet;
  jet.value = (W * value)(0) + static_cast<Scalar>(head.bias(0));
  const Mat g = W * grad;
  const Mat h = W * hess;
  for (int i = 0; i < D; ++i) jet.grad(i) = g(0, i);
  int k = 0;
  for (int i = 0; i < D; ++i)
    for (int j = i; j < D; ++j, ++k) {
      jet.hess(i, j) = h(0, k);
      jet.hess(j, i) = h(0, k);
    }
  return jet;
}

// ---------------------------------------------------------------------------
// Checkpoint: "S2DF1" magic, then little-endian
//   u32 input_dim, u32 layer_count, u32 dims[layer_count + 1],
//   f64 omega0, f64 hidden_omega,
//   per layer: f64 weight[out*in] (row-major), f64 bias[out].

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("checkpoint: truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[5] = {'S', '2', 'D', 'F', '1'};

inline void write_checkpoint(std::ostream& os, const SirenParams& p) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const auto dims = p.dims();
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.input_dim));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.layers.size()));
  for (int d : dims) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  detail::write_le<double>(os, p.omega0);
  detail::write_le<double>(os, p.hidden_omega);
  for (const auto& l : p.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::write_le<double>(os, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::write_le<double>(os, l.bias(r));
  }
}

inline SirenParams read_checkpoint(std::istream& is) {
  char magic[sizeof(kCheckpointMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("checkpoint: bad magic (expected S2DF1)");
  SirenParams p;
  p.input_dim = static_cast<int>(detail::read_le<std::uint32_t>(is));
  const auto count = detail::read_le<std::uint32_t>(is);
  if (count == 0 || count > 1024) throw ParseError("checkpoint: implausible layer count");
  std::vector<int> dims(count + 1);
  for (auto& d : dims) d = static_cast<int>(detail::read_le<std::uint32_t>(is));
  if (dims.front() != p.input_dim || dims.back() != 1) throw ParseError("checkpoint: inconsistent dims");
  p.omega0 = detail::read_le<double>(is);
  p.hidden_omega = detail::read_le<double>(is);
  for (std::uint32_t l = 0; l < count; ++l) {
    DenseLayer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = detail::read_le<double>(is);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = detail::read_le<double>(is);
    p.layers.push_back(std::move(layer));
  }
  p.validate();
  return p;
}

inline void save_checkpoint(const std::string& path, const SirenParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, p);
  if (!os) throw Error("failed writing checkpoint: " + path);
}

inline SirenParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace s2df
