#pragma once

// Discrete-time linear state-space models
//
//   x_k = A x_{k-1} + B u_k + drift,   y_k = C x_k,   k = 1..K,
//
// with a Gaussian initial state, plus target trajectories and the
// augmentation that exposes input first differences as an extra output.

#include <Eigen/Dense>

#include <cstddef>
#include <string>

#include "nuvlevel/error.hpp"

namespace nuvlevel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Inputs, one row per time step and one column per input channel.
using InputSeq = MatrixXd;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace detail

struct Lssm {
  MatrixXd A;  // N x N
  MatrixXd B;  // N x J
  MatrixXd C;  // L x N
  VectorXd drift;
  VectorXd x0_mean;
  MatrixXd x0_cov;

  Lssm() = default;

  /// Validates dimensions; drift, x0_mean and x0_cov default to zero when
  /// passed empty. x0_cov is symmetrized and negative eigenvalues are
  /// floored at 0.
  Lssm(MatrixXd a, MatrixXd b, MatrixXd c, VectorXd drift_ = {},
       VectorXd x0_mean_ = {}, MatrixXd x0_cov_ = {})
      : A(std::move(a)),
        B(std::move(b)),
        C(std::move(c)),
        drift(std::move(drift_)),
        x0_mean(std::move(x0_mean_)),
        x0_cov(std::move(x0_cov_)) {
    const auto n = A.rows();
    detail::require(n > 0 && A.cols() == n, "A must be square and nonempty");
    detail::require(B.rows() == n && B.cols() > 0, "B must be N x J with J >= 1");
    detail::require(C.cols() == n && C.rows() > 0, "C must be L x N with L >= 1");
    if (drift.size() == 0) drift = VectorXd::Zero(n);
    if (x0_mean.size() == 0) x0_mean = VectorXd::Zero(n);
    if (x0_cov.size() == 0) x0_cov = MatrixXd::Zero(n, n);
    detail::require(drift.size() == n, "drift must have N entries");
    detail::require(x0_mean.size() == n, "x0_mean must have N entries");
    detail::require(x0_cov.rows() == n && x0_cov.cols() == n, "x0_cov must be N x N");
    detail::require(detail::all_finite(A) && detail::all_finite(B) &&
                        detail::all_finite(C) && drift.allFinite() &&
                        x0_mean.allFinite() && detail::all_finite(x0_cov),
                    "model entries must be finite");
    x0_cov = 0.5 * (x0_cov + x0_cov.transpose()).eval();
    if (!x0_cov.isZero(0.0)) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(x0_cov);
      if (eig.eigenvalues().minCoeff() < 0.0) {
        const VectorXd floored = eig.eigenvalues().cwiseMax(0.0);
        x0_cov = eig.eigenvectors() * floored.asDiagonal() *
                 eig.eigenvectors().transpose();
        x0_cov = 0.5 * (x0_cov + x0_cov.transpose()).eval();
      }
    }
  }

  Eigen::Index states() const noexcept { return A.rows(); }
  Eigen::Index inputs() const noexcept { return B.cols(); }
  Eigen::Index outputs() const noexcept { return C.rows(); }
};

/// Target trajectory and its fitting weights.
///
/// `row_weights`, when nonempty (K x L), overrides `weights[k]` per output
/// component; the switching augmentation uses it to keep the difference row
/// observed on steps where the physical outputs are masked.
struct TargetSpec {
  MatrixXd targets;  // K x L
  VectorXd weights;  // K
  VectorXd s_sq;     // L
  MatrixXd row_weights;

  TargetSpec() = default;

  TargetSpec(MatrixXd targets_, VectorXd weights_, VectorXd s_sq_,
             MatrixXd row_weights_ = {})
      : targets(std::move(targets_)),
        weights(std::move(weights_)),
        s_sq(std::move(s_sq_)),
        row_weights(std::move(row_weights_)) {
    detail::require(targets.rows() >= 1 && targets.cols() >= 1,
                    "targets must be K x L with K, L >= 1");
    if (weights.size() == 0) weights = VectorXd::Ones(targets.rows());
    detail::require(weights.size() == targets.rows(), "weights must have K entries");
    detail::require(s_sq.size() == targets.cols(), "s_sq must have L entries");
    detail::require(targets.allFinite(), "targets must be finite");
    detail::require((weights.array() >= 0.0).all() && weights.allFinite(),
                    "weights must be finite and nonnegative");
    detail::require((s_sq.array() > 0.0).all() && s_sq.allFinite(),
                    "s_sq entries must be positive");
    if (row_weights.size() != 0) {
      detail::require(row_weights.rows() == targets.rows() &&
                          row_weights.cols() == targets.cols(),
                      "row_weights must be K x L");
      detail::require((row_weights.array() >= 0.0).all() && row_weights.allFinite(),
                      "row_weights must be finite and nonnegative");
    }
  }

  /// Uniform noise variance on every output component.
  static TargetSpec uniform(MatrixXd targets_, double s_sq_, VectorXd weights_ = {}) {
    const auto l = targets_.cols();
    return TargetSpec(std::move(targets_), std::move(weights_),
                      VectorXd::Constant(l, s_sq_));
  }

  Eigen::Index steps() const noexcept { return targets.rows(); }
  Eigen::Index outputs() const noexcept { return targets.cols(); }

  double weight(Eigen::Index k, Eigen::Index l) const {
    return row_weights.size() != 0 ? row_weights(k, l) : weights(k);
  }

  /// Sum of step weights, the normalizer of the reported mse.
  double total_weight() const { return weights.sum(); }
};

struct Trajectory {
  MatrixXd states;   // K x N
  MatrixXd outputs;  // K x L
};

/// Runs the recursion from x0 for as many steps as u has rows.
inline Trajectory simulate(const Lssm& model, const InputSeq& u, const VectorXd& x0) {
  detail::require(u.cols() == model.inputs(), "input columns must match B");
  detail::require(x0.size() == model.states(), "x0 must have N entries");
  const auto k_steps = u.rows();
  Trajectory t{MatrixXd(k_steps, model.states()), MatrixXd(k_steps, model.outputs())};
  VectorXd x = x0;
  for (Eigen::Index k = 0; k < k_steps; ++k) {
    x = (model.A * x + model.B * u.row(k).transpose() + model.drift).eval();
    t.states.row(k) = x.transpose();
    t.outputs.row(k) = (model.C * x).transpose();
  }
  return t;
}

inline Trajectory simulate(const Lssm& model, const InputSeq& u) {
  return simulate(model, u, model.x0_mean);
}

/// sum_k w_k ||y_k - target_k||^2 (no division by s^2).
inline double weighted_sse(const MatrixXd& outputs, const TargetSpec& target) {
  detail::require(outputs.rows() == target.steps() && outputs.cols() == target.outputs(),
                  "outputs must match the target dimensions");
  double total = 0.0;
  for (Eigen::Index k = 0; k < outputs.rows(); ++k) {
    for (Eigen::Index l = 0; l < outputs.cols(); ++l) {
      const double w = target.weight(k, l);
      if (w == 0.0) continue;
      const double d = outputs(k, l) - target.targets(k, l);
      total += w * d * d;
    }
  }
  return total;
}

/// Prepends two states (u_k, u_{k-1}) so that the first output row is
/// u_k - u_{k-1}; the remaining rows reproduce C. `combine` weights the
/// input columns that make up the switched quantity (all ones when empty),
/// and `u0` is the input assumed before the first step.
inline Lssm augment_for_switching(const Lssm& model, const VectorXd& combine = {},
                                  double u0 = 0.0) {
  const auto n = model.states();
  const auto j = model.inputs();
  const auto l = model.outputs();
  const VectorXd w = combine.size() == 0 ? VectorXd::Ones(j) : combine;
  detail::require(w.size() == j, "combine must have one weight per input column");

  MatrixXd a = MatrixXd::Zero(n + 2, n + 2);
  a(1, 0) = 1.0;
  a.bottomRightCorner(n, n) = model.A;

  MatrixXd b = MatrixXd::Zero(n + 2, j);
  b.row(0) = w.transpose();
  b.bottomRows(n) = model.B;

  MatrixXd c = MatrixXd::Zero(l + 1, n + 2);
  c(0, 0) = 1.0;
  c(0, 1) = -1.0;
  c.bottomRightCorner(l, n) = model.C;

  VectorXd drift = VectorXd::Zero(n + 2);
  drift.tail(n) = model.drift;
  VectorXd x0 = VectorXd::Zero(n + 2);
  x0(0) = u0;
  x0.tail(n) = model.x0_mean;
  MatrixXd cov = MatrixXd::Zero(n + 2, n + 2);
  cov.bottomRightCorner(n, n) = model.x0_cov;
  return Lssm(std::move(a), std::move(b), std::move(c), std::move(drift),
              std::move(x0), std::move(cov));
}

/// Target for the augmented model: a zero difference target with variance
/// `switching_s_sq`, observed on every step, ahead of the original rows.
inline TargetSpec augment_target_for_switching(const TargetSpec& target,
                                               double switching_s_sq) {
  detail::require(switching_s_sq > 0.0, "switching variance must be positive");
  const auto k = target.steps();
  const auto l = target.outputs();
  MatrixXd y = MatrixXd::Zero(k, l + 1);
  y.rightCols(l) = target.targets;
  VectorXd s(l + 1);
  s(0) = switching_s_sq;
  s.tail(l) = target.s_sq;
  MatrixXd rw(k, l + 1);
  rw.col(0).setOnes();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index r = 0; r < l; ++r) rw(i, r + 1) = target.weight(i, r);
  }
  return TargetSpec(std::move(y), target.weights, std::move(s), std::move(rw));
}

/// Number of steps k >= 2 at which the input changes.
inline std::size_t count_switches(const VectorXd& levels) {
  std::size_t n = 0;
  for (Eigen::Index k = 1; k < levels.size(); ++k) {
    if (levels(k) != levels(k - 1)) ++n;
  }
  return n;
}

}  // namespace nuvlevel
