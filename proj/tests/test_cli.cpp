#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

struct Run {
  int code;
  std::string out;
};

/// Runs the CLI with the given arguments; stdout is captured, stderr goes to
/// `err_file` when given and is discarded otherwise.
Run cli(const std::string& args, const std::string& err_file = "/dev/null") {
  const std::string cmd = std::string("\"") + NUVLEVEL_CLI + "\" " + args + " 2>" + err_file;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nuvlevel_cli_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string config(const std::string& name) {
  return std::string(NUVLEVEL_CONFIG_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("thresholds table") {
  const Run r = cli("thresholds");
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "mu,s2_am,s2_em");
  int rows = 0;
  bool blank_midpoint = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("0.5,", 0) == 0) blank_midpoint = line.back() == ',';
    if (line.rfind("0.25,", 0) == 0) CHECK(line.substr(line.rfind(',') + 1) == "0.125");
  }
  CHECK(rows == 601);
  CHECK(blank_midpoint);
  CHECK(r.out.find('\r') == std::string::npos);
}

TEST_CASE("invalid arguments exit with 2") {
  CHECK(cli("thresholds --a 1 --b 0").code == 2);
  CHECK(cli("thresholds --steps 1").code == 2);
  CHECK(cli("plan /nonexistent.json").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("plan " + config("dac.json") + " --mode xyz").code == 2);
  CHECK(cli("example nosuch").code == 2);

  const auto dir = scratch("bad");
  std::ofstream(dir / "bad.json") << "{\"A\": [[1]],\n \"B\": }";
  CHECK(cli("plan " + (dir / "bad.json").string()).code == 2);
  std::ofstream(dir / "key.json")
      << R"({"A": [[1]], "B": [[1]], "C": [[1]], "targets": [1], "s_sq": 1, "oops": 1})";
  CHECK(cli("plan " + (dir / "key.json").string()).code == 2);
}

TEST_CASE("seven-level integrator config plans to valid levels") {
  const auto dir = scratch("mlevel");
  const Run r = cli("plan " + config("mlevel_integrator.json") + " --format json --out " +
                    (dir / "out.json").string());
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "out.json"));
  CHECK(j["binarized"] == true);
  REQUIRE(j["u_levels"].size() == 200);
  for (const auto& v : j["u_levels"]) {
    const double x = v.get<double>();
    CHECK(x == std::round(x));
    CHECK(std::abs(x) <= 3.0);
  }
}

TEST_CASE("a tiny s_sq still plans but warns about binarization") {
  const auto dir = scratch("tiny");
  auto j = nlohmann::ordered_json::parse(slurp(config("dac.json")));
  j["s_sq"] = 1e-9;
  j["max_iters"] = 50;
  std::ofstream(dir / "tiny.json") << j.dump();
  const Run r = cli("plan " + (dir / "tiny.json").string() + " --format json",
                    (dir / "err.txt").string());
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["binarized"] == false);
  CHECK_THAT(slurp(dir / "err.txt"), Catch::Matchers::ContainsSubstring("did not binarize"));
}

TEST_CASE("reruns are byte identical") {
  const std::string args = "plan " + config("flappy.json") + " --format csv";
  const Run a = cli(args);
  const Run b = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("k,u_level,u_chan_0,y_0,target_0\n", 0) == 0);
}

TEST_CASE("scalar sweep and example outputs") {
  const Run s = cli("scalar --steps 11 --mode am");
  REQUIRE(s.code == 0);
  CHECK(s.out.rfind("mu,x_hat\n", 0) == 0);
  CHECK(std::count(s.out.begin(), s.out.end(), '\n') == 12);

  const auto dir = scratch("example");
  REQUIRE(cli("example mlevel --out " + dir.string()).code == 0);
  CHECK(std::filesystem::exists(dir / "mlevel.csv"));
  REQUIRE(cli("example flappy --format json --out " + dir.string()).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "flappy.json"))["binarized"] == true);
  REQUIRE(cli("example mlevel --problem-only --out " + (dir / "p").string()).code == 0);
  CHECK(slurp(dir / "p" / "mlevel.json") == slurp(config("mlevel_integrator.json")));
}

TEST_CASE("compare refuses oversized searches and reports three controllers") {
  CHECK(cli("compare " + config("dac.json") + " --horizon 40").code == 2);
  const auto dir = scratch("compare");
  auto j = nlohmann::ordered_json::parse(slurp(config("dac.json")));
  j["targets"] = std::vector<double>(j["targets"].begin(), j["targets"].begin() + 40);
  j["weights"] = std::vector<double>(40, 1.0);
  std::ofstream(dir / "short.json") << j.dump();
  const Run r = cli("compare " + (dir / "short.json").string() + " --horizon 6");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("controller,horizon,mse\n", 0) == 0);
  CHECK(r.out.find("\nikie_full,") != std::string::npos);
  CHECK(r.out.find("\nikie_receding,6,") != std::string::npos);
  CHECK(r.out.find("\noracle_receding,6,") != std::string::npos);
}
