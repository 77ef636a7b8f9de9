#pragma once

// Iterative Kalman input estimation (IKIE).
//
// Each iteration smooths the channel model under the current NUV variances
// (one pair per step and channel) and then re-estimates the variances, by
// joint MAP (AM) or by expectation maximization (EM). The M-level input is
// carried by binary channels composed through a LevelSpec; an optional
// switching penalty observes the composed input's first difference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "nuvlevel/error.hpp"
#include "nuvlevel/levels.hpp"
#include "nuvlevel/mbf.hpp"
#include "nuvlevel/nuv_prior.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

enum class EstimationMode { AM, EM };

struct IkieConfig {
  EstimationMode mode = EstimationMode::EM;
  std::size_t max_iters = 500;
  /// Convergence: largest change of a channel posterior mean.
  double tol_change = 1e-6;
  /// A channel counts as binary within this distance of 0 or 1.
  double tol_binary = 1e-3;
  /// Initial sigma_a^2 = sigma_b^2, in units of the channel gap (1).
  double init_variance = 1.0;
  /// Channel j starts at init_variance * (1 + j * symmetry_epsilon).
  double symmetry_epsilon = 1e-3;
  /// Variance of the zero target on u_k - u_{k-1}; unset disables the penalty.
  std::optional<double> switching_s_sq;
  /// Input assumed before the first step when the switching penalty is on.
  double u0 = 0.0;
  /// EM only: offer channels an exact pin (sigma^2 = 0 on the nearest bit).
  /// A batch of pins is kept only if the objective does not drop below the
  /// plain EM step, so the ascent property is preserved. false gives plain EM.
  bool pinning = true;
  /// Channels this close to a bit are offered a pin unconditionally.
  double pin_radius = 0.05;
  /// Channels this close to a bit are offered a pin when the bit is a local
  /// maximum of the evidence seen through the channel's own likelihood message.
  double pin_test_radius = 0.2;

  void validate() const {
    detail::require(max_iters >= 1, "max_iters must be at least 1");
    detail::require(tol_change > 0.0, "tol_change must be positive");
    detail::require(tol_binary > 0.0, "tol_binary must be positive");
    detail::require(init_variance > 0.0, "init_variance must be positive");
    detail::require(symmetry_epsilon >= 0.0 && symmetry_epsilon < 0.5,
                    "symmetry_epsilon must be in [0, 0.5)");
    detail::require(!switching_s_sq || *switching_s_sq > 0.0,
                    "switching_s_sq must be positive");
    detail::require(pin_radius >= 0.0 && pin_radius < 0.5, "pin_radius must be in [0, 0.5)");
    detail::require(pin_test_radius >= 0.0 && pin_test_radius < 0.5,
                    "pin_test_radius must be in [0, 0.5)");
    detail::require(std::isfinite(u0), "u0 must be finite");
  }
};

struct IterationRecord {
  /// log p(targets | theta) + sum log rho(theta): the quantity EM ascends.
  double objective;
  /// Largest distance of a channel posterior mean to its nearest bit.
  double max_level_distance;
};

struct PlanResult {
  MatrixXd u_cont;     // K x J channel posterior means
  VectorXd u_levels;   // K decoded levels
  MatrixXd y_pred;     // K x L outputs of the model driven by u_levels
  MatrixXd y_smooth;   // K x L posterior output means at the final theta
  double mse = 0.0;    // weighted_sse(y_pred) / sum of weights
  std::size_t iterations = 0;
  bool converged = false;
  bool binarized = false;
  double max_level_distance = 0.0;
  std::size_t switches = 0;
  std::size_t clamp_events = 0;
  std::vector<IterationRecord> history;
};

/// Per step and channel NUV variances.
struct ChannelThetas {
  MatrixXd sigma_a_sq;  // K x J, variance attached to bit 0
  MatrixXd sigma_b_sq;  // K x J, variance attached to bit 1
};

namespace detail {

inline const BinaryLevels& bit_levels() {
  static const BinaryLevels levels(0.0, 1.0);
  return levels;
}

struct Evaluated {
  ChannelThetas theta;
  SmoothResult smoothed;
  double objective = 0.0;
};

inline InputPrior priors_from(const ChannelThetas& t, double& log_scale_sum) {
  const auto K = t.sigma_a_sq.rows();
  const auto J = t.sigma_a_sq.cols();
  InputPrior p{MatrixXd(K, J), MatrixXd(K, J)};
  log_scale_sum = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < J; ++j) {
      const PriorProduct pp = product_of_gaussians(
          bit_levels(), NuvTheta{t.sigma_a_sq(k, j), t.sigma_b_sq(k, j)});
      p.mean(k, j) = pp.moments.mean;
      p.variance(k, j) = pp.moments.variance;
      log_scale_sum += pp.log_scale;
    }
  }
  return p;
}

inline Evaluated evaluate(const Lssm& model, const TargetSpec& target, ChannelThetas theta,
                          std::size_t iteration) {
  double log_scale = 0.0;
  const InputPrior priors = priors_from(theta, log_scale);
  Evaluated e;
  try {
    e.smoothed = smooth(model, target, priors);
  } catch (const NumericalFailure& f) {
    throw f.with_iteration(iteration);
  }
  e.theta = std::move(theta);
  e.objective = e.smoothed.log_evidence + log_scale;
  return e;
}

inline double max_bit_distance(const MatrixXd& u) {
  return (u.array().abs().min((u.array() - 1.0).abs())).maxCoeff();
}

inline ChannelThetas update_thetas(const ChannelThetas& current, const SmoothResult& s,
                                   EstimationMode mode) {
  ChannelThetas next = current;
  const auto& u = s.posterior.u_hat;
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      const NuvTheta t = mode == EstimationMode::AM
                             ? am_update(u(k, j), bit_levels())
                             : em_update({u(k, j), s.posterior.u_var(k, j)}, bit_levels());
      next.sigma_a_sq(k, j) = t.sigma_a_sq;
      next.sigma_b_sq(k, j) = t.sigma_b_sq;
    }
  }
  return next;
}

/// Likelihood message reaching one channel: posterior divided by prior.
/// Returns false when the targets carry no information about the channel.
inline bool channel_message(double post_mean, double post_var, double prior_mean,
                            double prior_var, ScalarObservation& msg) {
  if (!(post_var > 0.0) || !(post_var < prior_var)) return false;
  const double s_sq = 1.0 / (1.0 / post_var - 1.0 / prior_var);
  msg = {s_sq * (post_mean / post_var - prior_mean / prior_var), s_sq};
  return true;
}

/// Proposed pins for the unpinned channels: those within `radius` of a bit,
/// those within `test_radius` whose bit passes the local-maximum test, and
/// those the targets do not see at all (to the bit their prior leans on, or
/// bit 0 while the prior is still close to symmetric).
/// Returns nullopt when nothing qualifies.
inline std::optional<ChannelThetas> pin_candidates(const ChannelThetas& theta,
                                                   const SmoothResult& s,
                                                   const InputPrior& priors, double radius,
                                                   double test_radius) {
  ChannelThetas pinned = theta;
  bool any = false;
  const auto& u = s.posterior.u_hat;
  for (Eigen::Index k = 0; k < u.rows(); ++k) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      if (theta.sigma_a_sq(k, j) == 0.0 || theta.sigma_b_sq(k, j) == 0.0) continue;
      const double v = u(k, j);
      const double var = s.posterior.u_var(k, j);
      const bool uninformed = v == priors.mean(k, j) && var == priors.variance(k, j);
      // A prior still near its staggered start leans on no bit; bit 0 then.
      const bool flat = uninformed && std::abs(v - 0.5) < 0.25;
      const double bit = v > 0.5 && !flat ? 1.0 : 0.0;
      const double distance = std::abs(v - bit);
      bool pin = false;
      if (uninformed) {
        pin = true;
      } else if (distance < radius) {
        pin = true;
      } else if (distance < test_radius) {
        ScalarObservation msg{0.0, 1.0};
        pin = channel_message(v, var, priors.mean(k, j), priors.variance(k, j), msg) &&
              binarizing_point_is_local_max(msg, bit_levels(), bit);
      }
      if (!pin) continue;
      pinned.sigma_a_sq(k, j) = bit == 0.0 ? 0.0 : 1.0;
      pinned.sigma_b_sq(k, j) = bit == 0.0 ? 1.0 : 0.0;
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return pinned;
}

}  // namespace detail

/// Initial variances: init_variance * (1 + j * epsilon) for both bits of
/// channel j, identical across steps.
inline ChannelThetas initial_thetas(Eigen::Index steps, Eigen::Index channels,
                                    const IkieConfig& config) {
  ChannelThetas t{MatrixXd(steps, channels), MatrixXd(steps, channels)};
  for (Eigen::Index j = 0; j < channels; ++j) {
    const double e = static_cast<double>(j) * config.symmetry_epsilon;
    t.sigma_a_sq.col(j).setConstant(config.init_variance * (1.0 + e));
    t.sigma_b_sq.col(j).setConstant(config.init_variance * (1.0 - e));
  }
  return t;
}

/// Model and target actually smoothed: switching augmentation (if any)
/// followed by the channel split.
struct ChannelProblem {
  Lssm model;
  TargetSpec target;
};

inline ChannelProblem channel_problem(const Lssm& model, const TargetSpec& target,
                                      const LevelSpec& levels, const IkieConfig& config) {
  detail::require(target.outputs() == model.outputs(),
                  "target columns must match the model outputs");
  if (config.switching_s_sq) {
    const Lssm augmented = augment_for_switching(model, {}, config.u0);
    return {compose_channels(augmented, levels),
            augment_target_for_switching(target, *config.switching_s_sq)};
  }
  return {compose_channels(model, levels), target};
}

inline PlanResult plan(const Lssm& model, const TargetSpec& target, const LevelSpec& levels,
                       const IkieConfig& config = {}) {
  config.validate();
  const ChannelProblem problem = channel_problem(model, target, levels, config);
  const auto K = target.steps();
  const auto J = static_cast<Eigen::Index>(levels.channels());

  PlanResult result;
  detail::Evaluated current =
      detail::evaluate(problem.model, problem.target, initial_thetas(K, J, config), 0);
  MatrixXd previous;
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    const MatrixXd& u = current.smoothed.posterior.u_hat;
    result.history.push_back({current.objective, detail::max_bit_distance(u)});
    result.iterations = it;
    if (it > 1 && (u - previous).cwiseAbs().maxCoeff() < config.tol_change) {
      result.converged = true;
      break;
    }
    if (it == config.max_iters) break;
    previous = u;

    detail::Evaluated next = detail::evaluate(
        problem.model, problem.target,
        detail::update_thetas(current.theta, current.smoothed, config.mode), it);
    // AM only settles channels the targets cannot see; EM also tries pins.
    const bool em = config.mode == EstimationMode::EM;
    if (!em || config.pinning) {
      double unused = 0.0;
      const InputPrior priors = detail::priors_from(next.theta, unused);
      if (auto pinned = detail::pin_candidates(next.theta, next.smoothed, priors,
                                               em ? config.pin_radius : 0.0,
                                               em ? config.pin_test_radius : 0.0)) {
        detail::Evaluated trial =
            detail::evaluate(problem.model, problem.target, std::move(*pinned), it);
        if (!em || trial.objective >= next.objective) next = std::move(trial);
      }
    }
    current = std::move(next);
  }

  const SmoothResult& s = current.smoothed;
  result.u_cont = s.posterior.u_hat;
  result.clamp_events = s.posterior.clamp_events;
  const DecodedLevels decoded = decode_levels(result.u_cont, levels);
  result.u_levels = decoded.levels;
  result.max_level_distance = decoded.max_distance;
  result.binarized = decoded.max_distance < config.tol_binary;
  result.switches = count_switches(result.u_levels);

  const auto L = model.outputs();
  result.y_smooth = s.y_hat.rightCols(L);
  result.y_pred = simulate(model, result.u_levels).outputs;
  const double total = target.total_weight();
  result.mse = total > 0.0 ? weighted_sse(result.y_pred, target) / total : 0.0;
  return result;
}

/// Rows [first, first + count) of a target.
inline TargetSpec target_window(const TargetSpec& target, Eigen::Index first,
                                Eigen::Index count) {
  MatrixXd rw;
  if (target.row_weights.size() != 0) rw = target.row_weights.middleRows(first, count);
  return TargetSpec(target.targets.middleRows(first, count),
                    target.weights.segment(first, count), target.s_sq, std::move(rw));
}

/// Model restarted from a known state.
inline Lssm restarted(const Lssm& model, const VectorXd& state) {
  return Lssm(model.A, model.B, model.C, model.drift, state,
              MatrixXd::Zero(model.states(), model.states()));
}

/// Online control: plan over the next `horizon` targets from the current
/// state, apply the first decoded level, advance, repeat. A horizon that
/// covers the whole target is a single plan().
inline PlanResult receding_horizon(const Lssm& model, const TargetSpec& target,
                                   std::size_t horizon, const LevelSpec& levels,
                                   const IkieConfig& config = {}) {
  detail::require(horizon >= 1, "horizon must be at least 1");
  config.validate();
  const auto K = target.steps();
  if (static_cast<Eigen::Index>(horizon) >= K) return plan(model, target, levels, config);

  const auto J = static_cast<Eigen::Index>(levels.channels());
  PlanResult result;
  result.u_cont.resize(K, J);
  result.u_levels.resize(K);
  result.y_smooth.resize(K, model.outputs());
  result.converged = true;
  result.binarized = true;

  VectorXd x = model.x0_mean;
  double previous_level = config.u0;
  for (Eigen::Index t = 0; t < K; ++t) {
    const Eigen::Index window = std::min<Eigen::Index>(static_cast<Eigen::Index>(horizon), K - t);
    IkieConfig step_config = config;
    step_config.u0 = previous_level;
    const PlanResult local = plan(restarted(model, x), target_window(target, t, window),
                                  levels, step_config);
    const double level = local.u_levels(0);
    result.u_cont.row(t) = local.u_cont.row(0);
    result.u_levels(t) = level;
    result.y_smooth.row(t) = local.y_smooth.row(0);
    result.iterations += local.iterations;
    result.converged = result.converged && local.converged;
    result.clamp_events += local.clamp_events;
    x = (model.A * x + model.B.col(0) * level + model.drift).eval();
    previous_level = level;
  }
  const DecodedLevels decoded = decode_levels(result.u_cont, levels);
  result.max_level_distance = decoded.max_distance;
  result.binarized = decoded.max_distance < config.tol_binary;
  result.switches = count_switches(result.u_levels);
  result.y_pred = simulate(model, result.u_levels).outputs;
  const double total = target.total_weight();
  result.mse = total > 0.0 ? weighted_sse(result.y_pred, target) / total : 0.0;
  return result;
}

}  // namespace nuvlevel
