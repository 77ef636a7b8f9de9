#include <catch_amalgamated.hpp>

#include <random>

#include "nuvlevel/oracle.hpp"
#include "nuvlevel/scenarios.hpp"
#include "support/random_problems.hpp"

using namespace nuvlevel;
using Catch::Approx;

namespace {

/// Plain enumeration by counting in base M, no recursion and no bound.
std::pair<VectorXd, double> enumerate_all(const Lssm& m, const TargetSpec& t,
                                          const LevelSpec& spec) {
  const auto set = spec.level_set();
  const auto K = t.steps();
  const auto M = static_cast<long>(set.size());
  long total = 1;
  for (Eigen::Index k = 0; k < K; ++k) total *= M;
  VectorXd best_u;
  double best = INFINITY;
  for (long code = 0; code < total; ++code) {
    VectorXd u(K);
    long c = code;
    for (Eigen::Index k = K - 1; k >= 0; --k) {
      u(k) = set[static_cast<std::size_t>(c % M)];
      c /= M;
    }
    const double cost = weighted_sse(simulate(m, u).outputs, t);
    if (cost < best) {
      best = cost;
      best_u = u;
    }
  }
  return {best_u, best};
}

}  // namespace

TEST_CASE("single step picks the level nearest the target") {
  const Lssm m(MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1));
  const TargetSpec t = TargetSpec::uniform(MatrixXd::Constant(1, 1, 0.7), 1.0);
  const OracleResult r = exhaustive_search(m, t, LevelSpec::equidistant(-1.0, 1.0, 3));
  CHECK(r.u_opt(0) == 1.0);
  CHECK(r.cost == Approx(0.09));
}

TEST_CASE("three steps agree with naive enumeration") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testsupport::random_problem(rng, 3, 2, 1, 1);
    const LevelSpec spec = LevelSpec::equidistant(-1.0, 1.0, 3);
    const OracleResult r = exhaustive_search(p.model, p.target, spec);
    const auto [u, cost] = enumerate_all(p.model, p.target, spec);
    CHECK(r.cost == Approx(cost).epsilon(1e-12));
    CHECK(weighted_sse(simulate(p.model, r.u_opt).outputs, p.target) ==
          Approx(r.cost).epsilon(1e-12));
  }
}

TEST_CASE("realizable targets cost nothing") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pick(0, 3);
  const LevelSpec spec(0.0, {1.0, 2.0});
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testsupport::random_problem(rng, 6, 2, 2, 1);
    VectorXd u(6);
    for (int k = 0; k < 6; ++k) u(k) = pick(rng);
    const TargetSpec t(simulate(p.model, u).outputs, VectorXd::Ones(6), p.target.s_sq);
    const OracleResult r = exhaustive_search(p.model, t, spec);
    CHECK(r.cost == Approx(0.0).margin(1e-20));
  }
}

TEST_CASE("pruning never changes the optimum") {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> kd(2, 7);
  std::uint64_t pruned_nodes = 0, full_nodes = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testsupport::random_problem(rng, kd(rng), 3, 1, 1);
    const LevelSpec spec = LevelSpec::equidistant(-1.0, 1.0, 3);
    const OracleResult a = exhaustive_search(p.model, p.target, spec, kDefaultMaxNodes, true);
    const OracleResult b = exhaustive_search(p.model, p.target, spec, kDefaultMaxNodes, false);
    CHECK(a.cost == b.cost);
    CHECK(a.u_opt == b.u_opt);
    pruned_nodes += a.nodes_visited;
    full_nodes += b.nodes_visited;
  }
  CHECK(pruned_nodes < full_nodes);
}

TEST_CASE("ties go to the lexicographically smallest sequence") {
  // Zero weights everywhere: every sequence costs nothing.
  const Lssm m = scenarios::integrator_plant();
  const TargetSpec t = TargetSpec::uniform(MatrixXd::Zero(4, 1), 1.0, VectorXd::Zero(4));
  const OracleResult r = exhaustive_search(m, t, LevelSpec::equidistant(-1.0, 1.0, 3));
  CHECK(r.cost == 0.0);
  CHECK(r.u_opt.isConstant(-1.0));
}

TEST_CASE("search refuses budgets it cannot meet") {
  const Problem p = scenarios::dac(30, 0.045);
  CHECK(required_leaves(p.levels, 30) == Approx(std::pow(2.0, 30)));
  CHECK_THROWS_AS(exhaustive_search(p.model, p.target, p.levels), BudgetExceeded);
  CHECK_THROWS_AS(exhaustive_search(p.model, p.target, p.levels, 1e3), BudgetExceeded);
  const Lssm two(MatrixXd::Identity(1, 1), MatrixXd::Ones(1, 2), MatrixXd::Ones(1, 1));
  CHECK_THROWS_AS(exhaustive_search(two, TargetSpec::uniform(MatrixXd::Zero(2, 1), 1.0),
                                    LevelSpec::binary(0, 1)),
                  InvalidArgument);
}

TEST_CASE("receding oracle") {
  const Problem p = scenarios::dac(16, 0.045);
  const OracleResult whole = exhaustive_search(p.model, p.target, p.levels);
  const RecedingOracleResult same = exhaustive_receding(p.model, p.target, 16, p.levels);
  CHECK(same.u_levels == whole.u_opt);
  CHECK(same.mse == Approx(whole.cost / 16.0).epsilon(1e-12));

  const Problem longer = scenarios::dac(60, 0.045);
  const RecedingOracleResult h1 = exhaustive_receding(longer.model, longer.target, 1, longer.levels);
  const RecedingOracleResult h8 = exhaustive_receding(longer.model, longer.target, 8, longer.levels);
  CHECK(h1.mse >= h8.mse);
  CHECK(h8.y_pred == simulate(longer.model, h8.u_levels).outputs);
  CHECK_THROWS_AS(exhaustive_receding(p.model, p.target, 0, p.levels), InvalidArgument);
}

TEST_CASE("IKIE never beats the global optimum") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = testsupport::random_problem(rng, 10, 2, 1, 1);
    const LevelSpec spec = LevelSpec::equidistant(-1.0, 1.0, 3);
    const OracleResult best = exhaustive_search(p.model, p.target, spec);
    const PlanResult r = plan(p.model, p.target, spec);
    CHECK(weighted_sse(r.y_pred, p.target) >= best.cost * (1.0 - 1e-12));
  }
}
