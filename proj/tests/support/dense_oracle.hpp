#pragma once

// Test-side reference: the whole planning problem written as one joint
// Gaussian over (x0, u_1..u_K) and conditioned on the observed targets with
// dense linear algebra. Shares nothing with the recursive smoother except the
// model types.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nuvlevel/mbf.hpp"
#include "nuvlevel/statespace.hpp"

namespace testsupport {

using nuvlevel::MatrixXd;
using nuvlevel::VectorXd;

struct DenseResult {
  MatrixXd u_mean;  // K x J
  MatrixXd u_var;   // K x J
  MatrixXd x_mean;  // K x N
  double log_evidence = 0.0;
};

inline DenseResult dense_posterior(const nuvlevel::Lssm& model, const nuvlevel::TargetSpec& target,
                                   const nuvlevel::InputPrior& prior) {
  const auto K = target.steps();
  const auto N = model.states();
  const auto J = model.inputs();
  const auto L = model.outputs();
  const Eigen::Index Z = N + K * J;

  VectorXd mu = VectorXd::Zero(Z);
  MatrixXd sigma = MatrixXd::Zero(Z, Z);
  mu.head(N) = model.x0_mean;
  sigma.topLeftCorner(N, N) = model.x0_cov;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < J; ++j) {
      mu(N + k * J + j) = prior.mean(k, j);
      sigma(N + k * J + j, N + k * J + j) = prior.variance(k, j);
    }
  }

  // x_k = T_k z + d_k, built by running the recursion on the matrices.
  std::vector<MatrixXd> T(static_cast<std::size_t>(K));
  std::vector<VectorXd> d(static_cast<std::size_t>(K));
  MatrixXd Tx = MatrixXd::Zero(N, Z);
  Tx.leftCols(N) = MatrixXd::Identity(N, N);
  VectorXd dx = VectorXd::Zero(N);
  for (Eigen::Index k = 0; k < K; ++k) {
    Tx = (model.A * Tx).eval();
    dx = (model.A * dx + model.drift).eval();
    Tx.middleCols(N + k * J, J) += model.B;
    T[static_cast<std::size_t>(k)] = Tx;
    d[static_cast<std::size_t>(k)] = dx;
  }

  std::vector<Eigen::Index> ks, ls;
  std::vector<double> noise;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index l = 0; l < L; ++l) {
      const double w = target.weight(k, l);
      if (w > 0.0) {
        ks.push_back(k);
        ls.push_back(l);
        noise.push_back(target.s_sq(l) / w);
      }
    }
  }
  const auto M = static_cast<Eigen::Index>(ks.size());
  MatrixXd H(M, Z);
  VectorXd r(M);
  MatrixXd R = MatrixXd::Zero(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto k = static_cast<std::size_t>(ks[static_cast<std::size_t>(i)]);
    const auto l = ls[static_cast<std::size_t>(i)];
    H.row(i) = model.C.row(l) * T[k];
    r(i) = target.targets(static_cast<Eigen::Index>(k), l) - model.C.row(l).dot(d[k]);
    R(i, i) = noise[static_cast<std::size_t>(i)];
  }

  DenseResult out;
  VectorXd post_mu = mu;
  MatrixXd post_sigma = sigma;
  if (M > 0) {
    const MatrixXd S = H * sigma * H.transpose() + R;
    const Eigen::LDLT<MatrixXd> ldlt(S);
    const VectorXd innov = r - H * mu;
    const MatrixXd gain = sigma * H.transpose() * ldlt.solve(MatrixXd::Identity(M, M));
    post_mu = mu + gain * innov;
    post_sigma = sigma - gain * H * sigma;
    const double log_det = ldlt.vectorD().array().log().sum();
    out.log_evidence = -0.5 * (static_cast<double>(M) * std::log(2.0 * M_PI) + log_det +
                               innov.dot(ldlt.solve(innov)));
  }
  out.u_mean.resize(K, J);
  out.u_var.resize(K, J);
  out.x_mean.resize(K, N);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < J; ++j) {
      out.u_mean(k, j) = post_mu(N + k * J + j);
      out.u_var(k, j) = post_sigma(N + k * J + j, N + k * J + j);
    }
    out.x_mean.row(k) = (T[static_cast<std::size_t>(k)] * post_mu + d[static_cast<std::size_t>(k)])
                            .transpose();
  }
  return out;
}

}  // namespace testsupport
