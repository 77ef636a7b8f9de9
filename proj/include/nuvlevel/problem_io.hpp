#pragma once

// JSON problem files and result serialization.
//
// A problem file is one flat object:
//
//   {"description": "...",
//    "A": [[...]], "B": [[...]], "C": [[...]],
//    "drift": [...], "x0_mean": [...], "x0_cov": [[...]],
//    "targets": [...] or [[...]], "weights": [...], "s_sq": 0.1 or [...],
//    "beta0": 0, "betas": [1],
//    "mode": "em", "max_iters": 500, ..., "horizon": 0}
//
// Only A, B, C, targets and s_sq are required.
// Unknown keys anywhere are rejected.

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "nuvlevel/error.hpp"
#include "nuvlevel/ikie.hpp"
#include "nuvlevel/levels.hpp"
#include "nuvlevel/scenarios.hpp"
#include "nuvlevel/statespace.hpp"

namespace nuvlevel {

using Json = nlohmann::ordered_json;

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace io_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw InvalidArgument(path + ": " + what);
}

inline void check_keys(const Json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
  }
}

inline const Json& required(const Json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(path + "." + key, "missing required key");
  return obj.at(key);
}

inline double number(const Json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

inline std::size_t count(const Json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(path, "expected a nonnegative integer");
  return static_cast<std::size_t>(v.get<long long>());
}

inline VectorXd vector(const Json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = number(v[i], path + "[" + std::to_string(i) + "]");
  }
  return out;
}

inline MatrixXd matrix(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0) fail(path, "rows must be nonempty arrays");
  MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!v[r].is_array() || v[r].size() != cols) fail(rp, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          number(v[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return out;
}

/// Targets: a flat array means a single output column.
inline MatrixXd column_or_matrix(const Json& v, const std::string& path) {
  if (v.is_array() && !v.empty() && !v[0].is_array()) {
    const VectorXd col = vector(v, path);
    return MatrixXd(col);
  }
  return matrix(v, path);
}

inline Json to_json(const VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json(const MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text,
                                                       std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace io_detail

namespace io_detail {

inline const std::set<std::string>& problem_keys() {
  static const std::set<std::string> keys{
      "description", "A", "B", "C", "drift", "x0_mean", "x0_cov",
      "targets", "weights", "s_sq", "beta0", "betas",
      "mode", "max_iters", "tol_change", "tol_binary", "init_variance", "symmetry_epsilon",
      "switching_s_sq", "u0", "pinning", "pin_radius", "pin_test_radius", "horizon"};
  return keys;
}

inline Lssm model_from_json(const Json& j) {
  MatrixXd a = matrix(required(j, "$", "A"), "$.A");
  MatrixXd b = matrix(required(j, "$", "B"), "$.B");
  MatrixXd c = matrix(required(j, "$", "C"), "$.C");
  VectorXd drift = j.contains("drift") ? vector(j.at("drift"), "$.drift") : VectorXd();
  VectorXd x0 = j.contains("x0_mean") ? vector(j.at("x0_mean"), "$.x0_mean") : VectorXd();
  MatrixXd cov = j.contains("x0_cov") ? matrix(j.at("x0_cov"), "$.x0_cov") : MatrixXd();
  try {
    return Lssm(std::move(a), std::move(b), std::move(c), std::move(drift), std::move(x0),
                std::move(cov));
  } catch (const InvalidArgument& e) {
    fail("$ (model)", e.what());
  }
}

inline TargetSpec target_from_json(const Json& j) {
  MatrixXd y = column_or_matrix(required(j, "$", "targets"), "$.targets");
  VectorXd w = j.contains("weights") ? vector(j.at("weights"), "$.weights") : VectorXd();
  const Json& s = required(j, "$", "s_sq");
  VectorXd s_sq = s.is_array() ? vector(s, "$.s_sq")
                               : VectorXd::Constant(y.cols(), number(s, "$.s_sq"));
  try {
    return TargetSpec(std::move(y), std::move(w), std::move(s_sq));
  } catch (const InvalidArgument& e) {
    fail("$ (target)", e.what());
  }
}

inline LevelSpec levels_from_json(const Json& j) {
  const double beta0 = j.contains("beta0") ? number(j.at("beta0"), "$.beta0") : 0.0;
  const VectorXd b = j.contains("betas") ? vector(j.at("betas"), "$.betas") : VectorXd::Ones(1);
  try {
    return LevelSpec(beta0, std::vector<double>(b.data(), b.data() + b.size()));
  } catch (const InvalidArgument& e) {
    fail("$ (levels)", e.what());
  }
}

inline IkieConfig config_from_json(const Json& j) {
  IkieConfig c;
  if (j.contains("mode")) {
    const Json& m = j.at("mode");
    if (m == "em") c.mode = EstimationMode::EM;
    else if (m == "am") c.mode = EstimationMode::AM;
    else fail("$.mode", "expected \"am\" or \"em\"");
  }
  if (j.contains("max_iters")) c.max_iters = count(j.at("max_iters"), "$.max_iters");
  auto num = [&](const char* key, double& field) {
    if (j.contains(key)) field = number(j.at(key), std::string("$.") + key);
  };
  num("tol_change", c.tol_change);
  num("tol_binary", c.tol_binary);
  num("init_variance", c.init_variance);
  num("symmetry_epsilon", c.symmetry_epsilon);
  num("u0", c.u0);
  num("pin_radius", c.pin_radius);
  num("pin_test_radius", c.pin_test_radius);
  if (j.contains("pinning")) {
    if (!j.at("pinning").is_boolean()) fail("$.pinning", "expected true or false");
    c.pinning = j.at("pinning").get<bool>();
  }
  if (j.contains("switching_s_sq") && !j.at("switching_s_sq").is_null()) {
    c.switching_s_sq = number(j.at("switching_s_sq"), "$.switching_s_sq");
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    fail("$ (ikie settings)", e.what());
  }
  return c;
}

}  // namespace io_detail

inline Problem problem_from_json(const Json& j) {
  using namespace io_detail;
  check_keys(j, "$", problem_keys());
  Problem p;
  if (j.contains("description")) {
    if (!j.at("description").is_string()) fail("$.description", "expected a string");
    p.description = j.at("description").get<std::string>();
  }
  p.model = model_from_json(j);
  p.target = target_from_json(j);
  p.levels = levels_from_json(j);
  p.config = config_from_json(j);
  if (j.contains("horizon")) p.horizon = count(j.at("horizon"), "$.horizon");
  if (p.target.outputs() != p.model.outputs()) {
    fail("$.targets", "column count must equal the number of rows of C");
  }
  if (p.model.inputs() != 1) fail("$.B", "planning needs a single physical input column");
  return p;
}

/// Parses text; syntax errors report line and column.
inline Problem parse_problem(const std::string& text, const std::string& source = "<input>") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = io_detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string what = e.what();
    throw InvalidArgument(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": malformed JSON (" + what + ")");
  }
  try {
    return problem_from_json(j);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(source + ": " + e.what());
  }
}

inline Problem load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str(), path);
}

/// Canonical form: every key written, in a fixed order.
inline Json problem_to_json(const Problem& p) {
  using io_detail::to_json;
  Json j;
  j["description"] = p.description;
  j["A"] = to_json(p.model.A);
  j["B"] = to_json(p.model.B);
  j["C"] = to_json(p.model.C);
  j["drift"] = to_json(p.model.drift);
  j["x0_mean"] = to_json(p.model.x0_mean);
  j["x0_cov"] = to_json(p.model.x0_cov);
  if (p.target.outputs() == 1) {
    j["targets"] = to_json(VectorXd(p.target.targets.col(0)));
  } else {
    j["targets"] = to_json(p.target.targets);
  }
  j["weights"] = to_json(p.target.weights);
  if ((p.target.s_sq.array() == p.target.s_sq(0)).all()) {
    j["s_sq"] = p.target.s_sq(0);
  } else {
    j["s_sq"] = to_json(p.target.s_sq);
  }
  j["beta0"] = p.levels.beta0;
  j["betas"] = p.levels.betas;
  const IkieConfig& c = p.config;
  j["mode"] = c.mode == EstimationMode::EM ? "em" : "am";
  j["max_iters"] = c.max_iters;
  j["tol_change"] = c.tol_change;
  j["tol_binary"] = c.tol_binary;
  j["init_variance"] = c.init_variance;
  j["symmetry_epsilon"] = c.symmetry_epsilon;
  j["switching_s_sq"] = c.switching_s_sq ? Json(*c.switching_s_sq) : Json(nullptr);
  j["u0"] = c.u0;
  j["pinning"] = c.pinning;
  j["pin_radius"] = c.pin_radius;
  j["pin_test_radius"] = c.pin_test_radius;
  j["horizon"] = p.horizon;
  return j;
}

inline Json plan_result_to_json(const PlanResult& r, const TargetSpec& target) {
  using io_detail::to_json;
  Json j;
  j["mse"] = r.mse;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["binarized"] = r.binarized;
  j["max_level_distance"] = r.max_level_distance;
  j["switches"] = r.switches;
  j["clamp_events"] = r.clamp_events;
  j["u_levels"] = to_json(r.u_levels);
  j["u_channels"] = to_json(r.u_cont);
  j["y_pred"] = to_json(r.y_pred);
  j["y_smooth"] = to_json(r.y_smooth);
  j["targets"] = to_json(target.targets);
  Json h = Json::array();
  for (const auto& rec : r.history) {
    h.push_back(Json{{"objective", rec.objective}, {"max_level_distance", rec.max_level_distance}});
  }
  j["history"] = std::move(h);
  return j;
}

/// One row per step: k,u_level,u_chan_0..,y_0..,target_0..
inline void write_plan_csv(std::ostream& out, const PlanResult& r, const TargetSpec& target) {
  out << "k,u_level";
  for (Eigen::Index j = 0; j < r.u_cont.cols(); ++j) out << ",u_chan_" << j;
  for (Eigen::Index l = 0; l < r.y_pred.cols(); ++l) out << ",y_" << l;
  for (Eigen::Index l = 0; l < target.outputs(); ++l) out << ",target_" << l;
  out << '\n';
  for (Eigen::Index k = 0; k < r.u_levels.size(); ++k) {
    out << (k + 1) << ',' << format_double(r.u_levels(k));
    for (Eigen::Index j = 0; j < r.u_cont.cols(); ++j) out << ',' << format_double(r.u_cont(k, j));
    for (Eigen::Index l = 0; l < r.y_pred.cols(); ++l) out << ',' << format_double(r.y_pred(k, l));
    for (Eigen::Index l = 0; l < target.outputs(); ++l) {
      out << ',' << format_double(target.targets(k, l));
    }
    out << '\n';
  }
}

}  // namespace nuvlevel
