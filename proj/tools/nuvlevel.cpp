// Command-line front end: plan from problem files, bundled examples,
// threshold and scalar-estimate curves, and the oracle comparison.
//
// Exit codes: 0 success, 2 invalid input or refused request, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nuvlevel/nuvlevel.hpp"

namespace {

using namespace nuvlevel;

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string out;
  std::string format = "csv";
  std::optional<std::size_t> max_iters;
  std::string mode;
  bool seedless = false;
};

// The tool draws no random numbers anywhere; --seedless only makes that
// explicit in the summary so scripted runs can record it.
void note_seedless(const Options& opt, std::ostream& log) {
  if (opt.seedless) log << "seedless: no random number generator used\n";
}

void apply_overrides(const Options& opt, IkieConfig& config) {
  if (opt.max_iters) config.max_iters = *opt.max_iters;
  if (opt.mode == "am") config.mode = EstimationMode::AM;
  if (opt.mode == "em") config.mode = EstimationMode::EM;
  config.validate();
}

/// Writes to --out when given, else to stdout.
void emit(const Options& opt, const std::string& text) {
  if (opt.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(opt.out, std::ios::binary);
  if (!f) throw InvalidArgument(opt.out + ": cannot open for writing");
  f << text;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument(path.string() + ": cannot open for writing");
  f << text;
}

std::string render(const Options& opt, const PlanResult& r, const TargetSpec& target) {
  if (opt.format == "json") return plan_result_to_json(r, target).dump(2) + "\n";
  std::ostringstream s;
  write_plan_csv(s, r, target);
  return s.str();
}

PlanResult run(const Problem& p) {
  if (p.horizon > 0) return receding_horizon(p.model, p.target, p.horizon, p.levels, p.config);
  return plan(p.model, p.target, p.levels, p.config);
}

void summarize(std::ostream& log, const std::string& name, const PlanResult& r) {
  log << name << ": mse=" << format_double(r.mse) << " iterations=" << r.iterations
      << " converged=" << (r.converged ? "true" : "false")
      << " binarized=" << (r.binarized ? "true" : "false")
      << " max_level_distance=" << format_double(r.max_level_distance)
      << " switches=" << r.switches << "\n";
  if (!r.binarized) {
    std::cerr << "warning: " << name
              << " did not binarize; some inputs sit between levels. Raising s_sq usually helps.\n";
  }
}

std::vector<double> grid(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw InvalidArgument("steps must be at least 2");
  if (!(lo < hi)) throw InvalidArgument("need mu-min < mu-max");
  std::vector<double> g(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  g.back() = hi;
  return g;
}

int cmd_plan(const Options& opt, const std::string& path) {
  Problem p = load_problem(path);
  apply_overrides(opt, p.config);
  const PlanResult r = run(p);
  emit(opt, render(opt, r, p.target));
  std::ostream& log = opt.out.empty() ? std::cerr : std::cout;
  summarize(log, path, r);
  note_seedless(opt, log);
  return 0;
}

int cmd_thresholds(const Options& opt, double a, double b, double lo, double hi,
                   std::size_t steps) {
  if (!(a < b)) throw InvalidArgument("need a < b");
  const BinaryLevels levels(a, b);
  std::ostringstream s;
  s << "mu,s2_am,s2_em\n";
  for (double mu : grid(lo, hi, steps)) {
    s << format_double(mu) << ',' << format_double(s2_am_threshold(levels, mu)) << ',';
    try {
      s << format_double(s2_em_threshold(levels, mu));
    } catch (const UndefinedThreshold&) {
      // pole at the midpoint: left blank
    }
    s << '\n';
  }
  emit(opt, s.str());
  return 0;
}

int cmd_scalar(const Options& opt, double a, double b, double s_sq, double lo, double hi,
               std::size_t steps) {
  if (!(a < b)) throw InvalidArgument("need a < b");
  if (!(s_sq > 0.0)) throw InvalidArgument("s_sq must be positive");
  const BinaryLevels levels(a, b);
  const bool am = opt.mode == "am";
  const std::size_t iters = opt.max_iters.value_or(10000);
  std::ostringstream s;
  s << "mu,x_hat\n";
  for (double mu : grid(lo, hi, steps)) {
    const ScalarObservation obs{mu, s_sq};
    const NuvTheta init = default_scalar_init(levels);
    const ScalarSolveResult r = am ? scalar_am_solve(obs, levels, init, 1e-12, iters)
                                   : scalar_em_solve(obs, levels, init, 1e-12, iters);
    s << format_double(mu) << ',' << format_double(r.x_hat) << '\n';
  }
  emit(opt, s.str());
  return 0;
}

std::vector<std::pair<std::string, Problem>> bundled(const std::string& name) {
  std::vector<std::pair<std::string, Problem>> out;
  if (name == "dac") out.emplace_back("dac", scenarios::dac());
  else if (name == "flappy") out.emplace_back("flappy", scenarios::flappy());
  else if (name == "mlevel") out.emplace_back("mlevel", scenarios::mlevel());
  else if (name == "motor") {
    int i = 1;
    for (const auto& setting : scenarios::kMotorSettings) {
      out.emplace_back("motor_" + std::to_string(i++), scenarios::motor(setting));
    }
  } else {
    throw InvalidArgument("unknown example '" + name + "' (dac, flappy, motor, mlevel)");
  }
  return out;
}

int cmd_example(const Options& opt, const std::string& name, bool problem_only) {
  const std::filesystem::path dir = opt.out.empty() ? "." : opt.out;
  std::filesystem::create_directories(dir);
  for (auto& [stem, p] : bundled(name)) {
    if (problem_only) {
      write_file(dir / (stem + ".json"), problem_to_json(p).dump(2) + "\n");
      continue;
    }
    apply_overrides(opt, p.config);
    const PlanResult r = run(p);
    const std::string ext = opt.format == "json" ? ".json" : ".csv";
    write_file(dir / (stem + ext), render(opt, r, p.target));
    summarize(std::cout, stem, r);
  }
  note_seedless(opt, std::cout);
  return 0;
}

int cmd_compare(const Options& opt, const std::string& path, std::size_t horizon) {
  Problem p = load_problem(path);
  apply_overrides(opt, p.config);
  if (horizon == 0) throw InvalidArgument("horizon must be at least 1");
  const auto window = std::min<Eigen::Index>(static_cast<Eigen::Index>(horizon), p.target.steps());
  const double need = required_leaves(p.levels, window);
  if (need > kDefaultMaxNodes) throw BudgetExceeded(need, kDefaultMaxNodes);

  const PlanResult full = plan(p.model, p.target, p.levels, p.config);
  const PlanResult rh = receding_horizon(p.model, p.target, horizon, p.levels, p.config);
  const RecedingOracleResult ex = exhaustive_receding(p.model, p.target, horizon, p.levels);

  if (opt.format == "json") {
    Json j;
    j["horizon"] = horizon;
    j["ikie_full"] = {{"mse", full.mse}, {"binarized", full.binarized}};
    j["ikie_receding"] = {{"mse", rh.mse}, {"binarized", rh.binarized}};
    j["oracle_receding"] = {{"mse", ex.mse}, {"nodes_visited", ex.nodes_visited}};
    emit(opt, j.dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << "controller,horizon,mse\n";
    s << "ikie_full," << p.target.steps() << ',' << format_double(full.mse) << '\n';
    s << "ikie_receding," << horizon << ',' << format_double(rh.mse) << '\n';
    s << "oracle_receding," << horizon << ',' << format_double(ex.mse) << '\n';
    emit(opt, s.str());
  }
  note_seedless(opt, opt.out.empty() ? std::cerr : std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-level input planning with binarizing NUV priors"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--out", opt.out, "Output file (directory for 'example')");
  app.add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--max-iters", opt.max_iters, "Iteration cap override")
      ->check(CLI::PositiveNumber);
  app.add_option("--mode", opt.mode, "am or em")->check(CLI::IsMember({"am", "em"}));
  app.add_flag("--seedless", opt.seedless, "Assert that no random numbers are used");

  std::string problem_path;
  auto* plan_cmd = app.add_subcommand("plan", "Plan inputs for a JSON problem file");
  plan_cmd->add_option("problem", problem_path, "Problem file")->required();

  double a = 0.0, b = 1.0, mu_min = -1.0, mu_max = 2.0, s_sq = 1.0;
  std::size_t steps = 601;
  auto* thr_cmd = app.add_subcommand("thresholds", "CSV of the AM and EM thresholds over mu");
  auto* sc_cmd = app.add_subcommand("scalar", "CSV of the scalar estimate over mu");
  for (auto* c : {thr_cmd, sc_cmd}) {
    c->add_option("--a", a, "Lower level")->capture_default_str();
    c->add_option("--b", b, "Upper level")->capture_default_str();
    c->add_option("--mu-min", mu_min)->capture_default_str();
    c->add_option("--mu-max", mu_max)->capture_default_str();
    c->add_option("--steps", steps)->capture_default_str();
  }
  sc_cmd->add_option("--s-sq", s_sq, "Observation variance")->capture_default_str();

  std::string example_name;
  bool problem_only = false;
  auto* ex_cmd = app.add_subcommand("example", "Run a bundled example");
  ex_cmd->add_option("name", example_name, "dac, flappy, motor or mlevel")->required();
  ex_cmd->add_flag("--problem-only", problem_only, "Write the problem files instead of running");

  std::size_t horizon = 8;
  auto* cmp_cmd = app.add_subcommand("compare", "Full IKIE vs receding IKIE vs receding oracle");
  cmp_cmd->add_option("problem", problem_path, "Problem file")->required();
  cmp_cmd->add_option("--horizon", horizon)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (plan_cmd->parsed()) return cmd_plan(opt, problem_path);
    if (thr_cmd->parsed()) return cmd_thresholds(opt, a, b, mu_min, mu_max, steps);
    if (sc_cmd->parsed()) return cmd_scalar(opt, a, b, s_sq, mu_min, mu_max, steps);
    if (ex_cmd->parsed()) return cmd_example(opt, example_name, problem_only);
    if (cmp_cmd->parsed()) return cmd_compare(opt, problem_path, horizon);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << " at iteration " << e.iteration() << "\n";
    return kExitNumerical;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const BudgetExceeded& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const UndefinedThreshold& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInvalid;
}
