#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "s2df/error.hpp"
#include "s2df/siren.hpp"

namespace s2df {

struct LossWeights {
  double dirichlet = 1e8;
  double neumann = 8e6;
  double ma = 8.5e-3;
  double nonmanifold = 1e6;

  /// Preset for open (non-watertight) shapes.
  static LossWeights open() { return {1e8, 8e6, 8.5e-3, 1e6}; }
  /// Preset for watertight shapes.
  static LossWeights watertight() { return {1e8, 8e6, 6e-3, 1e6}; }

  static LossWeights preset(std::string_view name) {
    if (name == "open") return open();
    if (name == "watertight") return watertight();
    throw PreconditionError("unknown loss weight preset: " + std::string(name));
  }

  void validate() const {
    if (dirichlet < 0 || neumann < 0 || ma < 0 || nonmanifold < 0)
      throw PreconditionError("LossWeights: weights must be non-negative");
    if (dirichlet == 0 && neumann == 0 && ma == 0 && nonmanifold == 0)
      throw PreconditionError("LossWeights: at least one weight must be positive");
  }

  LossWeights scaled(double c) const { return {c * dirichlet, c * neumann, c * ma, c * nonmanifold}; }
};

/// Second-order regularizer applied over the surface and off-surface batches.
enum class Regularizer {
  kMongeAmpere,   // |det(H - 2K I)|
  kEikonalPrime,  // | |grad|^2 - 4K value |  (ablation)
};

inline std::string_view to_string(Regularizer r) {
  return r == Regularizer::kMongeAmpere ? "ma" : "eikonal_prime";
}

inline Regularizer parse_regularizer(std::string_view s) {
  if (s == "ma") return Regularizer::kMongeAmpere;
  if (s == "eikonal_prime" || s == "eikonal-prime") return Regularizer::kEikonalPrime;
  throw PreconditionError("unknown loss variant: " + std::string(s));
}

/// Batch means of each term (pre-weighting) and their weighted sum. `ma`
/// holds whichever regularizer was active.
struct LossBreakdown {
  double ma = 0;
  double dirichlet = 0;
  double neumann = 0;
  double nonmanifold = 0;
  double total = 0;

  void finalize(const LossWeights& w) {
    total = w.ma * ma + w.dirichlet * dirichlet + w.neumann * neumann + w.nonmanifold * nonmanifold;
  }

  void check_finite() const {
    if (!std::isfinite(ma)) throw NumericalFailure("ma", "non-finite regularizer loss");
    if (!std::isfinite(dirichlet)) throw NumericalFailure("dirichlet", "non-finite Dirichlet loss");
    if (!std::isfinite(neumann)) throw NumericalFailure("neumann", "non-finite Neumann loss");
    if (!std::isfinite(nonmanifold)) throw NumericalFailure("nonmanifold", "non-finite non-manifold loss");
    if (!std::isfinite(total)) throw NumericalFailure("total", "non-finite total loss");
  }
};

template <int D, typename Scalar>
Scalar determinant(const Eigen::Matrix<Scalar, D, D>& m) {
  static_assert(D == 1 || D == 2 || D == 3, "closed-form determinant for D <= 3");
  if constexpr (D == 1) {
    return m(0, 0);
  } else if constexpr (D == 2) {
    return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  } else {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  }
}

/// Cofactor matrix, i.e. d det(M) / dM.
template <int D, typename Scalar>
Eigen::Matrix<Scalar, D, D> cofactor(const Eigen::Matrix<Scalar, D, D>& m) {
  Eigen::Matrix<Scalar, D, D> c;
  if constexpr (D == 1) {
    c(0, 0) = 1;
  } else if constexpr (D == 2) {
    c << m(1, 1), -m(1, 0), -m(0, 1), m(0, 0);
  } else {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
        const int j1 = (j + 1) % 3, j2 = (j + 2) % 3;
        c(i, j) = m(i1, j1) * m(i2, j2) - m(i1, j2) * m(i2, j1);
      }
  }
  return c;
}

template <typename Scalar>
Scalar sign_of(Scalar v) {
  return static_cast<Scalar>((v > 0) - (v < 0));
}

template <int D, typename Scalar>
Scalar ma_residual(const Jet2<D, Scalar>& jet, double K) {
  using Mat = Eigen::Matrix<Scalar, D, D>;
  const Mat m = jet.hess - static_cast<Scalar>(2.0 * K) * Mat::Identity();
  using std::abs;
  return abs(determinant<D, Scalar>(m));
}

template <typename Scalar>
Scalar dirichlet_term(Scalar value) {
  using std::abs;
  return abs(value);
}

template <int D, typename Scalar>
Scalar neumann_term(const Eigen::Matrix<Scalar, D, 1>& grad) {
  return grad.norm();
}

template <typename Scalar>
Scalar nonmanifold_term(Scalar value, double alpha) {
  using std::abs;
  using std::exp;
  return exp(-static_cast<Scalar>(alpha) * abs(value));
}

template <int D, typename Scalar>
Scalar eikonal_prime_residual(const Jet2<D, Scalar>& jet, double K) {
  using std::abs;
  return abs(jet.grad.squaredNorm() - static_cast<Scalar>(4.0 * K) * jet.value);
}

template <int D, typename Scalar>
Scalar regularizer_residual(Regularizer r, const Jet2<D, Scalar>& jet, double K) {
  return r == Regularizer::kMongeAmpere ? ma_residual(jet, K) : eikonal_prime_residual(jet, K);
}

/// Weighted loss over surface jets P and off-surface jets Q. Integrals are
/// realized as Monte-Carlo means; the regularizer runs over P and Q together.
template <int D, typename Scalar = double>
LossBreakdown total_loss(std::span<const Jet2<D, Scalar>> jets_p, std::span<const Jet2<D, Scalar>> jets_q,
                         const LossWeights& weights, double K, double alpha,
                         Regularizer reg = Regularizer::kMongeAmpere) {
  if (jets_p.empty()) throw PreconditionError("total_loss: surface batch is empty");
  if (weights.nonmanifold > 0 && jets_q.empty())
    throw PreconditionError("total_loss: off-surface batch is empty");

  Scalar ma = 0, dir = 0, neu = 0, non = 0;
  for (const auto& j : jets_p) {
    ma += regularizer_residual(reg, j, K);
    dir += dirichlet_term(j.value);
    neu += neumann_term<D, Scalar>(j.grad);
  }
  for (const auto& j : jets_q) {
    ma += regularizer_residual(reg, j, K);
    non += nonmanifold_term(j.value, alpha);
  }

  LossBreakdown b;
  b.ma = static_cast<double>(ma / static_cast<Scalar>(jets_p.size() + jets_q.size()));
  b.dirichlet = static_cast<double>(dir / static_cast<Scalar>(jets_p.size()));
  b.neumann = static_cast<double>(neu / static_cast<Scalar>(jets_p.size()));
  b.nonmanifold = jets_q.empty() ? 0.0 : static_cast<double>(non / static_cast<Scalar>(jets_q.size()));
  b.finalize(weights);
  b.check_finite();
  return b;
}

/// Same loss as `total_loss`, evaluated in the scalar type of the jets and
/// returned unrounded (used by finite-difference oracles).
template <int D, typename Scalar>
Scalar total_loss_value(std::span<const Jet2<D, Scalar>> jets_p, std::span<const Jet2<D, Scalar>> jets_q,
                        const LossWeights& w, double K, double alpha, Regularizer reg) {
  Scalar ma = 0, dir = 0, neu = 0, non = 0;
  for (const auto& j : jets_p) {
    ma += regularizer_residual(reg, j, K);
    dir += dirichlet_term(j.value);
    neu += neumann_term<D, Scalar>(j.grad);
  }
  for (const auto& j : jets_q) {
    ma += regularizer_residual(reg, j, K);
    non += nonmanifold_term(j.value, alpha);
  }
  const Scalar np = static_cast<Scalar>(jets_p.size());
  const Scalar nq = static_cast<Scalar>(jets_q.size());
  Scalar total = static_cast<Scalar>(w.ma) * ma / (np + nq) + static_cast<Scalar>(w.dirichlet) * dir / np +
                 static_cast<Scalar>(w.neumann) * neu / np;
  if (!jets_q.empty()) total += static_cast<Scalar>(w.nonmanifold) * non / nq;
  return total;
}

}  // namespace s2df
