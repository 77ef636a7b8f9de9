#pragma once

// Exact minimization of the weighted fitting cost over all M^K level
// sequences by depth-first search. Partial costs only grow, so a branch
// whose accumulated cost already reaches the incumbent is cut.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "nuvlevel/error.hpp"
#include "nuvlevel/ikie.hpp"
#include "nuvlevel/levels.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

inline constexpr double kDefaultMaxNodes = 16777216.0;  // 2^24

struct OracleResult {
  VectorXd u_opt;
  double cost = 0.0;
  std::uint64_t nodes_visited = 0;
};

namespace detail {

struct SearchContext {
  const Lssm& model;
  const TargetSpec& target;
  const std::vector<double>& levels;
  bool prune;
  std::vector<double> path;
  OracleResult best;

  double step_cost(Eigen::Index k, const VectorXd& x) const {
    double c = 0.0;
    for (Eigen::Index l = 0; l < target.outputs(); ++l) {
      const double w = target.weight(k, l);
      if (w == 0.0) continue;
      const double d = model.C.row(l).dot(x) - target.targets(k, l);
      c += w * d * d;
    }
    return c;
  }

  void descend(Eigen::Index k, const VectorXd& x, double cost) {
    if (k == target.steps()) {
      // Strict improvement only: ties keep the earlier, lexicographically
      // smaller sequence.
      if (cost < best.cost) {
        best.cost = cost;
        best.u_opt = Eigen::Map<const VectorXd>(path.data(), static_cast<Eigen::Index>(path.size()));
      }
      return;
    }
    for (double level : levels) {
      ++best.nodes_visited;
      const VectorXd next = model.A * x + model.B.col(0) * level + model.drift;
      const double c = cost + step_cost(k, next);
      if (prune && c >= best.cost) continue;
      path[static_cast<std::size_t>(k)] = level;
      descend(k + 1, next, c);
    }
  }
};

}  // namespace detail

inline double required_leaves(const LevelSpec& levels, Eigen::Index steps) {
  return std::pow(static_cast<double>(levels.level_set().size()), static_cast<double>(steps));
}

/// Globally optimal level sequence from model.x0_mean. `prune` = false is
/// plain enumeration, kept for cross-checking the bound.
inline OracleResult exhaustive_search(const Lssm& model, const TargetSpec& target,
                                      const LevelSpec& levels,
                                      double max_nodes = kDefaultMaxNodes, bool prune = true) {
  detail::require(model.inputs() == 1, "exhaustive search needs a single physical input");
  detail::require(target.outputs() == model.outputs(),
                  "target columns must match the model outputs");
  const double need = required_leaves(levels, target.steps());
  if (need > max_nodes) throw BudgetExceeded(need, max_nodes);

  const std::vector<double> set = levels.level_set();
  detail::SearchContext ctx{model, target, set, prune,
                            std::vector<double>(static_cast<std::size_t>(target.steps())),
                            {}};
  ctx.best.cost = std::numeric_limits<double>::infinity();
  ctx.descend(0, model.x0_mean, 0.0);
  return ctx.best;
}

struct RecedingOracleResult {
  VectorXd u_levels;
  MatrixXd y_pred;
  double mse = 0.0;
  std::uint64_t nodes_visited = 0;
};

/// Receding-horizon controller built on exhaustive_search: optimal over
/// each window, first level applied, state advanced.
inline RecedingOracleResult exhaustive_receding(const Lssm& model, const TargetSpec& target,
                                                std::size_t horizon, const LevelSpec& levels,
                                                double max_nodes = kDefaultMaxNodes) {
  detail::require(horizon >= 1, "horizon must be at least 1");
  const auto K = target.steps();
  RecedingOracleResult r;
  r.u_levels.resize(K);
  VectorXd x = model.x0_mean;
  for (Eigen::Index t = 0; t < K; ++t) {
    const Eigen::Index window = std::min<Eigen::Index>(static_cast<Eigen::Index>(horizon), K - t);
    const OracleResult local = exhaustive_search(restarted(model, x),
                                                 target_window(target, t, window), levels,
                                                 max_nodes);
    r.nodes_visited += local.nodes_visited;
    r.u_levels(t) = local.u_opt(0);
    x = (model.A * x + model.B.col(0) * local.u_opt(0) + model.drift).eval();
  }
  r.y_pred = simulate(model, r.u_levels).outputs;
  const double total = target.total_weight();
  r.mse = total > 0.0 ? weighted_sse(r.y_pred, target) / total : 0.0;
  return r;
}

}  // namespace nuvlevel
