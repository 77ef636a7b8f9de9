#pragma once

// Modified Bryson-Frazier smoothing with input estimation.
//
// Forward: a standard Kalman filter over x_k = A x_{k-1} + sum_j B_j u_{k,j}
// + drift with Gaussian input priors. Backward: the dual quantities
// xi~ (N-vector) and W~ (N x N) from the last step down, from which the
// posterior input moments are read off without inverting any N x N matrix:
//
//   u_hat = m_U - V_U B_j' xi~,     V_U,post = V_U - V_U^2 B_j' W~ B_j.
//
// The only factorization is of the innovation covariance over the observed
// output rows at each step.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "nuvlevel/error.hpp"
#include "nuvlevel/nuv_prior.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

/// Gaussian prior of every input channel at every step (K x J each).
struct InputPrior {
  MatrixXd mean;
  MatrixXd variance;
};

struct InputPosterior {
  MatrixXd u_hat;  // K x J
  MatrixXd u_var;  // K x J, >= 0
  /// Variances that came out negative by rounding and were set to 0.
  std::size_t clamp_events = 0;
};

struct SmoothResult {
  InputPosterior posterior;
  MatrixXd x_hat;  // K x N posterior state means
  MatrixXd y_hat;  // K x L posterior output means
  /// Prediction-error decomposition of log p(targets | priors).
  double log_evidence = 0.0;
};

namespace detail {

/// Forward-pass quantities for all steps, stored contiguously: step k owns
/// column k of the vectors and columns [kN, kN + N) of the matrices.
struct ForwardCache {
  MatrixXd m;     // forward mean of X_k before the step-k observation
  MatrixXd V;     // forward covariance of X_k
  MatrixXd F;     // I - V C' G C   (unused when nothing is observed)
  MatrixXd CtGe;  // C' G (target - C m)
  MatrixXd CtGC;  // C' G C
  std::vector<char> observed;

  ForwardCache(Eigen::Index K, Eigen::Index N)
      : m(N, K), V(N, N * K), F(N, N * K), CtGe(N, K), CtGC(N, N * K),
        observed(static_cast<std::size_t>(K), 0) {}

  auto Vk(Eigen::Index k) { return V.middleCols(k * V.rows(), V.rows()); }
  auto Fk(Eigen::Index k) { return F.middleCols(k * F.rows(), F.rows()); }
  auto CtGCk(Eigen::Index k) { return CtGC.middleCols(k * CtGC.rows(), CtGC.rows()); }
};

inline void symmetrize(MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace detail

/// Step-by-step observed output rows and their noise variances.
struct ObservationLayout {
  std::vector<Eigen::Index> rows;
  VectorXd noise;
};

inline ObservationLayout observation_layout(const TargetSpec& target, Eigen::Index k) {
  ObservationLayout o;
  const auto l = target.outputs();
  o.noise.resize(l);
  Eigen::Index n = 0;
  for (Eigen::Index r = 0; r < l; ++r) {
    const double w = target.weight(k, r);
    if (w > 0.0) {
      o.rows.push_back(r);
      o.noise(n++) = target.s_sq(r) / w;
    }
  }
  o.noise.conservativeResize(n);
  return o;
}

inline void validate_smoother_inputs(const Lssm& model, const TargetSpec& target,
                                     const InputPrior& priors) {
  const auto k = target.steps();
  detail::require(target.outputs() == model.outputs(),
                  "target columns must match the model outputs");
  detail::require(priors.mean.rows() == k && priors.mean.cols() == model.inputs(),
                  "prior means must be K x J");
  detail::require(priors.variance.rows() == k && priors.variance.cols() == model.inputs(),
                  "prior variances must be K x J");
  detail::require((priors.variance.array() >= 0.0).all() && priors.variance.allFinite() &&
                      priors.mean.allFinite(),
                  "prior variances must be finite and nonnegative");
}

/// Posterior input moments, state and output means, and log-evidence.
/// Steps with zero weight skip the observation update; each output row has
/// its own variance s_sq[l] / w.
inline SmoothResult smooth(const Lssm& model, const TargetSpec& target,
                           const InputPrior& priors) {
  validate_smoother_inputs(model, target, priors);
  const auto K = target.steps();
  const auto N = model.states();
  const auto J = model.inputs();
  const MatrixXd I = MatrixXd::Identity(N, N);

  detail::ForwardCache cache(K, N);
  double log_evidence = 0.0;

  VectorXd m_filt = model.x0_mean;
  MatrixXd V_filt = model.x0_cov;
  VectorXd m(N);
  MatrixXd V(N, N);
  for (Eigen::Index k = 0; k < K; ++k) {
    m.noalias() = model.A * m_filt;
    m += model.drift;
    V.noalias() = model.A * V_filt * model.A.transpose();
    // Input channels enter as successive rank-1 terms, channel 0 first.
    for (Eigen::Index j = 0; j < J; ++j) {
      const double mu = priors.mean(k, j);
      const double v = priors.variance(k, j);
      m.noalias() += model.B.col(j) * mu;
      if (v != 0.0) V.noalias() += v * model.B.col(j) * model.B.col(j).transpose();
    }
    detail::symmetrize(V);
    cache.m.col(k) = m;
    cache.Vk(k) = V;

    const ObservationLayout obs = observation_layout(target, k);
    const auto lo = static_cast<Eigen::Index>(obs.rows.size());
    if (lo == 0) {
      m_filt = m;
      V_filt = V;
      continue;
    }
    cache.observed[static_cast<std::size_t>(k)] = 1;

    MatrixXd Co(lo, N);
    VectorXd e(lo);
    for (Eigen::Index r = 0; r < lo; ++r) {
      const auto row = obs.rows[static_cast<std::size_t>(r)];
      Co.row(r) = model.C.row(row);
      e(r) = target.targets(k, row);
    }
    e -= Co * m;
    const MatrixXd VCt = V * Co.transpose();

    MatrixXd GC(lo, N);  // S^{-1} C
    VectorXd Ge(lo);     // S^{-1} e
    double log_det = 0.0;
    if (lo == 1) {
      const double s = obs.noise(0) + (Co.row(0) * VCt.col(0))(0);
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw NumericalFailure("innovation variance is not positive",
                               static_cast<std::size_t>(k));
      }
      GC = Co / s;
      Ge = e / s;
      log_det = std::log(s);
    } else {
      MatrixXd S = Co * VCt;
      S.diagonal() += obs.noise;
      detail::symmetrize(S);
      Eigen::LLT<MatrixXd> llt(S);
      if (llt.info() != Eigen::Success) {
        throw NumericalFailure("innovation covariance is not positive definite",
                               static_cast<std::size_t>(k));
      }
      GC = llt.solve(Co);
      Ge = llt.solve(e);
      log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }
    log_evidence += -0.5 * (static_cast<double>(lo) * kLog2Pi + log_det + e.dot(Ge));

    cache.CtGe.col(k) = Co.transpose() * Ge;
    MatrixXd CtGC = Co.transpose() * GC;
    detail::symmetrize(CtGC);
    cache.CtGCk(k) = CtGC;
    cache.Fk(k) = I - VCt * GC;
    m_filt = m + VCt * Ge;
    V_filt = cache.Fk(k) * V;
    detail::symmetrize(V_filt);
  }

  SmoothResult out;
  out.log_evidence = log_evidence;
  out.posterior.u_hat.resize(K, J);
  out.posterior.u_var.resize(K, J);
  out.x_hat.resize(K, N);

  VectorXd xi = VectorXd::Zero(N);
  MatrixXd W = MatrixXd::Zero(N, N);
  for (Eigen::Index k = K - 1; k >= 0; --k) {
    // xi~ and W~ arrive here as A' xi~_{k+1}, A' W~_{k+1} A.
    if (cache.observed[static_cast<std::size_t>(k)]) {
      const auto F = cache.Fk(k);
      xi = (F.transpose() * xi - cache.CtGe.col(k)).eval();
      W = (F.transpose() * W * F + cache.CtGCk(k)).eval();
      detail::symmetrize(W);
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const double mu = priors.mean(k, j);
      const double v = priors.variance(k, j);
      const auto b = model.B.col(j);
      out.posterior.u_hat(k, j) = mu - v * b.dot(xi);
      double var = v - v * v * b.dot(W * b);
      if (var < 0.0) {
        var = 0.0;
        ++out.posterior.clamp_events;
      }
      out.posterior.u_var(k, j) = var;
    }
    out.x_hat.row(k) = (cache.m.col(k) - cache.Vk(k) * xi).transpose();
    xi = (model.A.transpose() * xi).eval();
    W = (model.A.transpose() * W * model.A).eval();
  }
  out.y_hat = out.x_hat * model.C.transpose();
  return out;
}

/// Posterior state means from the same recursions.
inline MatrixXd posterior_states(const Lssm& model, const TargetSpec& target,
                                 const InputPrior& priors) {
  return smooth(model, target, priors).x_hat;
}

}  // namespace nuvlevel
