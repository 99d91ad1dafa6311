#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "s2df/losses.hpp"
#include "s2df/parallel.hpp"
#include "s2df/siren.hpp"

namespace s2df {

/// Channel layout of a jet block for N points: columns [c*N, (c+1)*N) hold
/// channel c, where c = 0 is the value, 1..D the gradient and the remaining
/// D(D+1)/2 channels the upper-triangular Hessian entries in row order.
template <int D>
struct JetLayout {
  static constexpr int kHess = D * (D + 1) / 2;
  static constexpr int kChannels = 1 + D + kHess;
  static constexpr int grad(int i) { return 1 + i; }
  static constexpr int hess(int i, int j) {  // i <= j
    return 1 + D + i * D - i * (i - 1) / 2 + (j - i);
  }
};

namespace detail {

/// Recorded forward pass over one chunk of points.
template <int D>
class JetTape {
 public:
  using L = JetLayout<D>;

  JetTape(const SirenParams& params, std::span<const Point<D>> pts) : params_(params), n_(static_cast<Eigen::Index>(pts.size())) {
    x_.resize(D, n_);
    for (Eigen::Index p = 0; p < n_; ++p) x_.col(p) = pts[p];
    const std::size_t hidden = params.num_hidden();
    pre_.resize(hidden);
    post_.resize(hidden);
    sin_.resize(hidden);
    cos_.resize(hidden);

    for (std::size_t l = 0; l < hidden; ++l) {
      const auto& layer = params.layers[l];
      const double w = params.omega(l);
      const Eigen::Index width = layer.weight.rows();
      Eigen::MatrixXd& a = pre_[l];
      a.resize(width, L::kChannels * n_);
      if (l == 0) {
        a.middleCols(0, n_).noalias() = layer.weight * x_;
        for (int i = 0; i < D; ++i) a.middleCols(L::grad(i) * n_, n_) = layer.weight.col(i).replicate(1, n_);
        a.rightCols(L::kHess * n_).setZero();
      } else {
        a.noalias() = layer.weight * post_[l - 1];
      }
      a.middleCols(0, n_).colwise() += layer.bias;
      a *= w;

      sin_[l] = a.middleCols(0, n_).array().sin().matrix();
      cos_[l] = a.middleCols(0, n_).array().cos().matrix();
      const auto s = sin_[l].array();
      const auto c = cos_[l].array();
      Eigen::MatrixXd& u = post_[l];
      u.resize(width, L::kChannels * n_);
      u.middleCols(0, n_) = sin_[l];
      for (int i = 0; i < D; ++i) u.middleCols(L::grad(i) * n_, n_) = (c * ch(a, L::grad(i)).array()).matrix();
      for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j)
          u.middleCols(L::hess(i, j) * n_, n_) =
              (c * ch(a, L::hess(i, j)).array() - s * ch(a, L::grad(i)).array() * ch(a, L::grad(j)).array()).matrix();
    }

    const auto& head = params.layers.back();
    out_.noalias() = head.weight * post_.back();
    out_.leftCols(n_).array() += head.bias(0);
  }

  Eigen::Index size() const { return n_; }

  Jet2<D> jet(Eigen::Index p) const {
    Jet2<D> j;
    j.value = out_(0, p);
    for (int i = 0; i < D; ++i) j.grad(i) = out_(0, L::grad(i) * n_ + p);
    for (int i = 0; i < D; ++i)
      for (int k = i; k < D; ++k) {
        j.hess(i, k) = out_(0, L::hess(i, k) * n_ + p);
        j.hess(k, i) = j.hess(i, k);
      }
    return j;
  }

  /// Accumulates d(loss)/d(params) given the output adjoint row (1 x C*N).
  void backward(const Eigen::RowVectorXd& out_bar, ParamGradient& grad) const {
    const std::size_t hidden = params_.num_hidden();
    auto& head = grad.layers.back();
    head.weight.noalias() += out_bar * post_.back().transpose();
    head.bias(0) += out_bar.leftCols(n_).sum();

    Eigen::MatrixXd u_bar = params_.layers.back().weight.transpose() * out_bar;
    Eigen::MatrixXd a_bar;
    for (std::size_t l = hidden; l-- > 0;) {
      sine_backward(l, u_bar, a_bar);
      a_bar *= params_.omega(l);
      auto& g = grad.layers[l];
      g.bias += a_bar.middleCols(0, n_).rowwise().sum();
      if (l > 0) {
        g.weight.noalias() += a_bar * post_[l - 1].transpose();
        u_bar.noalias() = params_.layers[l].weight.transpose() * a_bar;
      } else {
        g.weight.noalias() += a_bar.middleCols(0, n_) * x_.transpose();
        for (int i = 0; i < D; ++i) g.weight.col(i) += a_bar.middleCols(L::grad(i) * n_, n_).rowwise().sum();
      }
    }
  }

 private:
  template <typename M>
  auto ch(M& m, int c) const {
    return m.middleCols(c * n_, n_);
  }

  // Adjoint of u = sin(a) jets:
  //   a_val  = c u_val - s sum_i u_g_i ga_i - s sum_ij u_h_ij ha_ij - c sum_ij u_h_ij ga_i ga_j
  //   a_g_k  = c u_g_k - s sum_ij u_h_ij d(ga_i ga_j)/d ga_k
  //   a_h_ij = c u_h_ij
  void sine_backward(std::size_t l, const Eigen::MatrixXd& u_bar, Eigen::MatrixXd& a_bar) const {
    const Eigen::MatrixXd& a = pre_[l];
    const auto s = sin_[l].array();
    const auto c = cos_[l].array();
    a_bar.resize(u_bar.rows(), u_bar.cols());

    Eigen::ArrayXXd val = c * ch(u_bar, 0).array();
    Eigen::ArrayXXd g_acc = Eigen::ArrayXXd::Zero(u_bar.rows(), n_);
    Eigen::ArrayXXd h_acc = Eigen::ArrayXXd::Zero(u_bar.rows(), n_);
    Eigen::ArrayXXd q_acc = Eigen::ArrayXXd::Zero(u_bar.rows(), n_);
    for (int i = 0; i < D; ++i) {
      g_acc += ch(u_bar, L::grad(i)).array() * ch(a, L::grad(i)).array();
      ch(a_bar, L::grad(i)) = (c * ch(u_bar, L::grad(i)).array()).matrix();
    }
    for (int i = 0; i < D; ++i)
      for (int j = i; j < D; ++j) {
        const auto hb = ch(u_bar, L::hess(i, j)).array();
        const auto gi = ch(a, L::grad(i)).array();
        const auto gj = ch(a, L::grad(j)).array();
        h_acc += hb * ch(a, L::hess(i, j)).array();
        q_acc += hb * gi * gj;
        ch(a_bar, L::hess(i, j)) = (c * hb).matrix();
        if (i == j) {
          ch(a_bar, L::grad(i)).array() -= 2.0 * s * hb * gi;
        } else {
          ch(a_bar, L::grad(i)).array() -= s * hb * gj;
          ch(a_bar, L::grad(j)).array() -= s * hb * gi;
        }
      }
    ch(a_bar, 0) = (val - s * (g_acc + h_acc) - c * q_acc).matrix();
  }

  const SirenParams& params_;
  Eigen::Index n_;
  Eigen::MatrixXd x_;
  std::vector<Eigen::MatrixXd> pre_, post_, sin_, cos_;
  Eigen::RowVectorXd out_;
};

struct TermSums {
  double ma = 0, dirichlet = 0, neumann = 0, nonmanifold = 0;

  TermSums& operator+=(const TermSums& o) {
    ma += o.ma;
    dirichlet += o.dirichlet;
    neumann += o.neumann;
    nonmanifold += o.nonmanifold;
    return *this;
  }
};

}  // namespace detail

/// Jets for many points at once through the batched path.
template <int D>
std::vector<Jet2<D>> forward_jets(const SirenParams& params, std::span<const Point<D>> pts,
                                  const ExecOptions& exec = {}) {
  if (params.input_dim != D) throw PreconditionError("forward_jets: dimension mismatch");
  std::vector<Jet2<D>> out(pts.size());
  const std::size_t chunk = std::max<std::size_t>(1, exec.chunk_size);
  const std::size_t chunks = (pts.size() + chunk - 1) / chunk;
  parallel_for(chunks, exec.threads, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(pts.size(), lo + chunk);
    detail::JetTape<D> tape(params, pts.subspan(lo, hi - lo));
    for (std::size_t p = lo; p < hi; ++p) out[p] = tape.jet(static_cast<Eigen::Index>(p - lo));
  });
  return out;
}

/// Network values only (no derivative channels), batched.
template <int D>
std::vector<double> forward_values(const SirenParams& params, std::span<const Point<D>> pts,
                                   const ExecOptions& exec = {}) {
  if (params.input_dim != D) throw PreconditionError("forward_values: dimension mismatch");
  std::vector<double> out(pts.size());
  const std::size_t chunk = std::max<std::size_t>(1, exec.chunk_size) * 8;
  const std::size_t chunks = (pts.size() + chunk - 1) / chunk;
  parallel_for(chunks, exec.threads, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(pts.size(), lo + chunk);
    const auto n = static_cast<Eigen::Index>(hi - lo);
    Eigen::MatrixXd u(D, n);
    for (Eigen::Index p = 0; p < n; ++p) u.col(p) = pts[lo + p];
    for (std::size_t l = 0; l < params.num_hidden(); ++l) {
      const auto& layer = params.layers[l];
      Eigen::MatrixXd a = layer.weight * u;
      a.colwise() += layer.bias;
      u = (params.omega(l) * a.array()).sin().matrix();
    }
    const Eigen::RowVectorXd v = params.layers.back().weight * u;
    for (Eigen::Index p = 0; p < n; ++p) out[lo + p] = v(p) + params.layers.back().bias(0);
  });
  return out;
}

/// Total loss over surface points P and off-surface points Q together with
/// its exact gradient with respect to every network parameter. Per-chunk
/// partial results are reduced in chunk order, so the output is independent
/// of the thread count.
template <int D>
std::pair<LossBreakdown, ParamGradient> loss_param_gradient(const SirenParams& params, std::span<const Point<D>> surface,
                                                            std::span<const Point<D>> offsurface,
                                                            const LossWeights& weights, double K, double alpha,
                                                            Regularizer reg = Regularizer::kMongeAmpere,
                                                            const ExecOptions& exec = {}) {
  using L = JetLayout<D>;
  if (params.input_dim != D) throw PreconditionError("loss_param_gradient: dimension mismatch");
  if (surface.empty()) throw PreconditionError("loss_param_gradient: surface batch is empty");
  if (weights.nonmanifold > 0 && offsurface.empty())
    throw PreconditionError("loss_param_gradient: off-surface batch is empty");

  const std::size_t np = surface.size(), nq = offsurface.size();
  const std::size_t total_pts = np + nq;
  const double w_reg = weights.ma / static_cast<double>(total_pts);
  const double w_dir = weights.dirichlet / static_cast<double>(np);
  const double w_neu = weights.neumann / static_cast<double>(np);
  const double w_non = nq ? weights.nonmanifold / static_cast<double>(nq) : 0.0;

  // Chunks never straddle the P/Q boundary.
  struct Range {
    bool on_surface;
    std::size_t lo, hi;
  };
  std::vector<Range> ranges;
  const std::size_t chunk = std::max<std::size_t>(1, exec.chunk_size);
  for (std::size_t lo = 0; lo < np; lo += chunk) ranges.push_back({true, lo, std::min(np, lo + chunk)});
  for (std::size_t lo = 0; lo < nq; lo += chunk) ranges.push_back({false, lo, std::min(nq, lo + chunk)});

  std::vector<detail::TermSums> sums(ranges.size());
  std::vector<ParamGradient> grads(ranges.size());

  parallel_for(ranges.size(), exec.threads, [&](std::size_t r) {
    const Range& range = ranges[r];
    const auto pts = (range.on_surface ? surface : offsurface).subspan(range.lo, range.hi - range.lo);
    detail::JetTape<D> tape(params, pts);
    const Eigen::Index n = tape.size();
    Eigen::RowVectorXd out_bar = Eigen::RowVectorXd::Zero(L::kChannels * n);
    detail::TermSums& s = sums[r];

    for (Eigen::Index p = 0; p < n; ++p) {
      const Jet2<D> jet = tape.jet(p);
      Eigen::Matrix<double, D, D> hess_bar = Eigen::Matrix<double, D, D>::Zero();
      Eigen::Matrix<double, D, 1> grad_bar = Eigen::Matrix<double, D, 1>::Zero();
      double value_bar = 0.0;

      if (reg == Regularizer::kMongeAmpere) {
        const Eigen::Matrix<double, D, D> m = jet.hess - 2.0 * K * Eigen::Matrix<double, D, D>::Identity();
        const double det = determinant<D, double>(m);
        s.ma += std::abs(det);
        hess_bar += w_reg * sign_of(det) * cofactor<D, double>(m);
      } else {
        const double r_ = jet.grad.squaredNorm() - 4.0 * K * jet.value;
        s.ma += std::abs(r_);
        grad_bar += w_reg * sign_of(r_) * 2.0 * jet.grad;
        value_bar += w_reg * sign_of(r_) * (-4.0 * K);
      }

      if (range.on_surface) {
        s.dirichlet += std::abs(jet.value);
        value_bar += w_dir * sign_of(jet.value);
        const double gn = jet.grad.norm();
        s.neumann += gn;
        if (gn > 0) grad_bar += w_neu * jet.grad / gn;
      } else {
        const double e = std::exp(-alpha * std::abs(jet.value));
        s.nonmanifold += e;
        value_bar += w_non * (-alpha) * sign_of(jet.value) * e;
      }

      out_bar(p) = value_bar;
      for (int i = 0; i < D; ++i) out_bar(L::grad(i) * n + p) = grad_bar(i);
      for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j)
          out_bar(L::hess(i, j) * n + p) = i == j ? hess_bar(i, i) : hess_bar(i, j) + hess_bar(j, i);
    }

    grads[r] = ParamGradient::zeros_like(params);
    tape.backward(out_bar, grads[r]);
  });

  detail::TermSums acc;
  ParamGradient grad = ParamGradient::zeros_like(params);
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    acc += sums[r];
    grad += grads[r];
  }

  LossBreakdown b;
  b.ma = acc.ma / static_cast<double>(total_pts);
  b.dirichlet = acc.dirichlet / static_cast<double>(np);
  b.neumann = acc.neumann / static_cast<double>(np);
  b.nonmanifold = nq ? acc.nonmanifold / static_cast<double>(nq) : 0.0;
  b.finalize(weights);
  b.check_finite();
  if (!grad.all_finite()) throw NumericalFailure("gradient", "non-finite parameter gradient");
  return {b, std::move(grad)};
}

}  // namespace s2df
