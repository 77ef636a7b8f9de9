#include <catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <sstream>

#include "nuvlevel/problem_io.hpp"

using namespace nuvlevel;

namespace {

const char* kMinimal = R"({
  "A": [[1.0]],
  "B": [[0.1]],
  "C": [[1.0]],
  "targets": [0.1, 0.2, 0.3],
  "s_sq": 0.5
})";

std::string with_extra(const std::string& extra) {
  std::string s = kMinimal;
  s.insert(s.rfind('}'), ", " + extra);
  return s;
}

void same_problem(const Problem& a, const Problem& b) {
  CHECK(a.description == b.description);
  CHECK(a.model.A == b.model.A);
  CHECK(a.model.B == b.model.B);
  CHECK(a.model.C == b.model.C);
  CHECK(a.model.drift == b.model.drift);
  CHECK(a.model.x0_mean == b.model.x0_mean);
  CHECK(a.model.x0_cov == b.model.x0_cov);
  CHECK(a.target.targets == b.target.targets);
  CHECK(a.target.weights == b.target.weights);
  CHECK(a.target.s_sq == b.target.s_sq);
  CHECK(a.levels.beta0 == b.levels.beta0);
  CHECK(a.levels.betas == b.levels.betas);
  CHECK(a.config.mode == b.config.mode);
  CHECK(a.config.max_iters == b.config.max_iters);
  CHECK(a.config.switching_s_sq == b.config.switching_s_sq);
  CHECK(a.config.u0 == b.config.u0);
  CHECK(a.config.pinning == b.config.pinning);
  CHECK(a.horizon == b.horizon);
}

}  // namespace

TEST_CASE("minimal problem gets defaults") {
  const Problem p = parse_problem(kMinimal);
  CHECK(p.target.steps() == 3);
  CHECK(p.target.weights.isOnes(0.0));
  CHECK(p.model.drift.isZero(0.0));
  CHECK(p.levels.beta0 == 0.0);
  CHECK(p.levels.betas == std::vector<double>{1.0});
  CHECK(p.config.mode == EstimationMode::EM);
  CHECK(p.horizon == 0);
}

TEST_CASE("bundled scenarios round-trip through JSON") {
  std::vector<Problem> all{scenarios::dac(), scenarios::flappy(), scenarios::mlevel()};
  for (const auto& s : scenarios::kMotorSettings) all.push_back(scenarios::motor(s));
  for (const Problem& p : all) {
    const std::string text = problem_to_json(p).dump(2);
    const Problem back = parse_problem(text);
    same_problem(p, back);
    CHECK(problem_to_json(back).dump(2) == text);
  }
}

TEST_CASE("multi-output targets and per-output variances") {
  const Problem p = parse_problem(R"({
    "A": [[1, 0], [0, 1]], "B": [[1], [1]], "C": [[1, 0], [0, 1]],
    "targets": [[1, 2], [3, 4]], "s_sq": [0.1, 0.2], "betas": [1, 2], "beta0": -1,
    "switching_s_sq": 5, "mode": "am", "horizon": 3
  })");
  CHECK(p.target.targets(1, 0) == 3.0);
  CHECK(p.target.s_sq(1) == 0.2);
  CHECK(p.levels.level_set().size() == 4);
  CHECK(p.config.switching_s_sq == 5.0);
  CHECK(p.config.mode == EstimationMode::AM);
  CHECK(p.horizon == 3);
  same_problem(p, parse_problem(problem_to_json(p).dump()));
}

TEST_CASE("unknown keys are rejected with their path") {
  try {
    parse_problem(with_extra(R"("colour": 1)"), "p.json");
    FAIL("accepted an unknown key");
  } catch (const InvalidArgument& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("$.colour"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("p.json"));
  }
}

TEST_CASE("malformed JSON reports line and column") {
  const std::string bad = "{\n  \"A\": [[1.0]],\n  \"B\": [[0.1]] oops\n}";
  try {
    parse_problem(bad, "bad.json");
    FAIL("accepted malformed JSON");
  } catch (const InvalidArgument& e) {
    CHECK_THAT(e.what(), Catch::Matchers::StartsWith("bad.json:3:"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("malformed JSON"));
  }
}

TEST_CASE("invalid values are rejected") {
  auto rejects = [](const std::string& text) {
    CHECK_THROWS_AS(parse_problem(text), InvalidArgument);
  };
  rejects(R"({"B": [[0.1]], "C": [[1.0]], "targets": [0], "s_sq": 1})");
  rejects(with_extra(R"("mode": "gibbs")"));
  rejects(with_extra(R"("max_iters": -3)"));
  rejects(with_extra(R"("max_iters": 2.5)"));
  rejects(with_extra(R"("weights": [1, 1])"));
  rejects(with_extra(R"("betas": [])"));
  rejects(with_extra(R"("pinning": "yes")"));
  rejects(R"({"A": [[1.0]], "B": [[0.1]], "C": [[1.0]], "targets": [0], "s_sq": -1})");
  rejects(R"({"A": [[1.0]], "B": [[0.1]], "C": [[1.0]], "targets": [[0, 1]], "s_sq": 1})");
  rejects(R"({"A": [[1.0]], "B": [[0.1, 1]], "C": [[1.0]], "targets": [0], "s_sq": 1})");
  rejects(R"({"A": [[1.0], [2]], "B": [[0.1]], "C": [[1.0]], "targets": [0], "s_sq": 1})");
  rejects(R"([1, 2])");
  CHECK_THROWS_AS(load_problem("/nonexistent/problem.json"), InvalidArgument);
}

TEST_CASE("shipped configs load and round-trip") {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(NUVLEVEL_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const Problem p = load_problem(entry.path().string());
    same_problem(p, parse_problem(problem_to_json(p).dump(2)));
  }
  CHECK(seen == 6);
}

TEST_CASE("shortest round-trip number formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300) == "-2.5e-300");
  CHECK(format_double(INFINITY) == "inf");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("plan CSV layout and determinism") {
  const Problem p = scenarios::mlevel();
  const PlanResult r = plan(p.model, p.target, p.levels, p.config);
  std::ostringstream a, b;
  write_plan_csv(a, r, p.target);
  write_plan_csv(b, plan(p.model, p.target, p.levels, p.config), p.target);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,u_level,u_chan_0,u_chan_1,u_chan_2,u_chan_3,u_chan_4,u_chan_5,y_0,target_0");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
  }
  CHECK(rows == 200);
  CHECK(a.str().find('\r') == std::string::npos);
  CHECK(a.str().back() == '\n');

  const Json j = plan_result_to_json(r, p.target);
  CHECK(j["u_levels"].size() == 200);
  CHECK(j["binarized"] == r.binarized);
  CHECK(j["history"].size() == r.history.size());
}
