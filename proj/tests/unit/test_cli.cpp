#include "gasflow/error.hpp"
#include "gasflow/run.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gasflow;
namespace fs = std::filesystem;

namespace {

fs::path config_path(const char* name) { return fs::path(GASFLOW_CONFIG_DIR) / name; }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gasflow_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig single_pipe_config(Mode mode, const fs::path& out) {
  RunConfig c;
  c.network_path = config_path("single_pipe.json");
  c.mode = mode;
  c.cells = 12;
  c.gamma = 1000.0;
  c.mc_samples = 500;
  c.out_dir = out;
  return c;
}

/// Routes the default logger into a string for the lifetime of the object.
class LogCapture {
 public:
  LogCapture() : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(stream_);
    auto logger = std::make_shared<spdlog::logger>("capture", sink);
    logger->set_level(spdlog::level::warn);
    spdlog::set_default_logger(logger);
  }
  ~LogCapture() { spdlog::set_default_logger(previous_); }
  std::string text() const { return stream_.str(); }

 private:
  std::shared_ptr<spdlog::logger> previous_;
  std::ostringstream stream_;
};

}  // namespace

TEST_CASE("mode names") {
  for (Mode m : {Mode::Simulate, Mode::OptimizeDet, Mode::OptimizeCc, Mode::Validate, Mode::Prices}) {
    CHECK(parse_mode(to_string(m)) == m);
  }
  CHECK(parse_mode("det") == Mode::OptimizeDet);
  CHECK(parse_mode("cc") == Mode::OptimizeCc);
  CHECK_THROWS_AS(parse_mode("optimise"), Error);
}

TEST_CASE("ID=VALUE assignments") {
  CHECK(parse_assignment("J3=300") == std::pair<std::string, double>{"J3", 300.0});
  const auto inf = parse_assignment("J3=inf");
  CHECK(inf.first == "J3");
  CHECK(std::isinf(inf.second));
  for (const char* bad : {"J3", "=4", "J3=", "J3=12x", "J3=abc"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_assignment(bad), Error);
  }
}

TEST_CASE("network overrides") {
  RunConfig c;
  c.network_path = config_path("eight_node.json");
  c.qmax = {{"J3", 300.0}};
  c.epsilon = 0.2;
  const Network net = prepare_network(c);
  const Node& j3 = net.nodes()[net.node_index("J3")];
  const Node& j5 = net.nodes()[net.node_index("J5")];
  CHECK(j3.demand_max == 300.0);
  CHECK(*j5.epsilon == 0.2);

  c.qmax = {{"J5", 300.0}};
  CHECK_THROWS_AS(prepare_network(c), Error);
  c.qmax = {{"JX", 300.0}};
  CHECK_THROWS_AS(prepare_network(c), Error);
  c.qmax.clear();
  c.epsilon = -1.0;
  CHECK_THROWS_AS(prepare_network(c), Error);
}

TEST_CASE("seeded validate runs are byte identical") {
  const fs::path a = scratch("validate_a");
  const fs::path b = scratch("validate_b");
  const RunResult ra = run(single_pipe_config(Mode::Validate, a));
  const RunResult rb = run(single_pipe_config(Mode::Validate, b));
  CHECK(ra.exit_code == 0);
  CHECK(rb.exit_code == 0);
  REQUIRE(ra.artifacts.size() == rb.artifacts.size());
  CHECK(fs::exists(a / "solution.json"));
  CHECK(fs::exists(a / "kkt_report.json"));
  CHECK(fs::exists(a / "violation_report.json"));
  CHECK(fs::exists(a / "dist_pressure_N3_discrete.csv"));
  CHECK(fs::exists(a / "dist_pressure_N3_density.csv"));
  for (std::size_t i = 0; i < ra.artifacts.size(); ++i) {
    CAPTURE(ra.artifacts[i]);
    CHECK(ra.artifacts[i].filename() == rb.artifacts[i].filename());
    CHECK(slurp(ra.artifacts[i]) == slurp(rb.artifacts[i]));
  }
  const auto report = nlohmann::json::parse(slurp(a / "violation_report.json"));
  CHECK(report["chance"][0]["node"] == "N3");
  CHECK(report["chance"][0]["samples"] == 500);
}

TEST_CASE("deterministic mode warns that the uncertainty is ignored") {
  const fs::path out = scratch("det");
  LogCapture log;
  const RunResult r = run(single_pipe_config(Mode::OptimizeDet, out));
  CHECK(r.exit_code == 0);
  CHECK(log.text().find("ignores the uncertainty at node N3") != std::string::npos);
  const auto doc = nlohmann::json::parse(slurp(out / "solution.json"));
  CHECK(doc["status"] == "Optimal");
  CHECK(doc["cells"].size() == 1);
}

TEST_CASE("simulate writes the steady state") {
  const fs::path out = scratch("simulate");
  RunConfig c = single_pipe_config(Mode::Simulate, out);
  c.alpha = {{"C1", 1.2}};
  const RunResult r = run(c);
  CHECK(r.exit_code == 0);
  const auto doc = nlohmann::json::parse(slurp(out / "state.json"));
  CHECK(doc["alpha"]["C1"] == 1.2);
  CHECK(doc["pressures"]["N2"].get<double>() == doctest::Approx(std::sqrt(1.2) * 4.3367e6));
  CHECK(doc["flows"]["P1"].get<double>() == doctest::Approx(250.0));

  c.alpha = {{"CX", 1.2}};
  CHECK_THROWS_AS(run(c), Error);
}

TEST_CASE("exit codes follow the solver status") {
  const fs::path dir = scratch("infeasible");
  auto doc = nlohmann::json::parse(slurp(config_path("single_pipe.json")));
  doc["compressors"][0]["alpha_max"] = 1.0;
  const fs::path network = dir / "no_boost.json";
  std::ofstream(network) << doc.dump();
  RunConfig c = single_pipe_config(Mode::OptimizeDet, dir / "out");
  c.network_path = network;
  CHECK(run(c).exit_code == 3);

  RunConfig few = single_pipe_config(Mode::OptimizeCc, dir / "few");
  few.cells = 3;
  CHECK_THROWS_AS(run(few), Error);
}

TEST_CASE("sweeps write one row per solve") {
  const fs::path empty_dir = scratch("sweep_empty");
  const SweepResult empty = sweep(single_pipe_config(Mode::OptimizeCc, empty_dir), {});
  CHECK(empty.exit_code == 0);
  CHECK(empty.rows.empty());
  const std::string header = slurp(empty.csv);
  CHECK(header.rfind("epsilon,qmax,status,alpha_C1,objective,", 0) == 0);
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);

  const fs::path dir = scratch("sweep");
  const SweepResult res = sweep(single_pipe_config(Mode::OptimizeCc, dir), {0.1, 0.01});
  CHECK(res.exit_code == 0);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].epsilon == 0.01);
  CHECK(res.rows[1].epsilon == 0.1);
  CHECK(res.rows[0].alpha[0] > res.rows[1].alpha[0]);
  const std::string csv = slurp(res.csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  RunConfig eight;
  eight.network_path = config_path("eight_node.json");
  eight.cells = 8;
  eight.gamma = 100.0;
  eight.mc_samples = 200;
  eight.out_dir = scratch("sweep_qmax");
  const SweepResult q = sweep(eight, {0.1}, "J3", {200.0, kInf});
  REQUIRE(q.rows.size() == 2);
  CHECK(q.rows[0].qmax == 200.0);
  CHECK(std::isinf(*q.rows[1].qmax));
  CHECK(q.rows[0].expected_demand[0] == doctest::Approx(200.0).epsilon(1e-6));
}
