#include "gasflow/error.hpp"
#include "gasflow/run.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

using namespace gasflow;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gasflow");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("GASFLOW_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

std::vector<double> parse_values(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const std::string& s : items) out.push_back(parse_assignment("v=" + s).second);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Steady-state gas network simulation and chance-constrained optimal gas flow"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  RunConfig config;
  std::string mode = "opt-cc";
  std::optional<double> epsilon;
  std::vector<std::string> qmax, alpha;
  std::string out_dir = "out";

  app.add_option("--network", config.network_path, "Network JSON file")->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode, "simulate | opt-det | opt-cc | validate | prices");
  app.add_option("--cells", config.cells, "Number of stochastic cells K")->capture_default_str();
  app.add_option("--epsilon", epsilon, "Override epsilon of every chance-constrained node");
  app.add_option("--gamma", config.gamma, "Penalty curvature")->capture_default_str();
  app.add_option("--delta", config.delta, "Flow smoothing, kg/s")->capture_default_str();
  app.add_option("--mc-samples", config.mc_samples, "Monte Carlo samples")->capture_default_str();
  app.add_option("--seed", config.seed, "Monte Carlo seed")->capture_default_str();
  app.add_option("--threads", config.threads, "Monte Carlo worker threads")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--qmax", qmax, "Nomination upper bound NODE=VALUE (VALUE may be inf)");
  app.add_option("--alpha", alpha, "Compressor ratio for simulate, ID=VALUE");
  app.add_option("--dist", config.distributions, "Extra distribution selector, e.g. flow@P1");
  app.add_flag("--shared-nominations", config.shared_nominations,
               "One nomination for all cells instead of one per cell");

  app.add_subcommand("simulate", "Steady state at the mean withdrawals")->callback([&] { mode = "simulate"; });
  auto* optimize = app.add_subcommand("optimize", "Deterministic or chance-constrained optimal gas flow");
  std::string opt_mode = "cc";
  optimize->add_option("--mode", opt_mode, "det | cc")->check(CLI::IsMember({"det", "cc"}))->capture_default_str();
  optimize->callback([&] { mode = opt_mode; });
  app.add_subcommand("validate", "Chance-constrained solve and Monte Carlo check")->callback([&] { mode = "validate"; });
  app.add_subcommand("prices", "Chance-constrained solve and price distributions")->callback([&] { mode = "prices"; });
  auto* sweep_cmd = app.add_subcommand("sweep", "Chance-constrained solves over a list of epsilons or bounds");
  std::vector<std::string> epsilons, qmax_values;
  std::string qmax_node;
  sweep_cmd->add_option("--epsilons", epsilons, "Epsilon values")->delimiter(',');
  sweep_cmd->add_option("--qmax-node", qmax_node, "Node whose nomination bound is swept");
  sweep_cmd->add_option("--qmax-values", qmax_values, "Bounds for --qmax-node (inf allowed)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    config.epsilon = epsilon;
    config.out_dir = out_dir;
    for (const std::string& s : qmax) config.qmax.push_back(parse_assignment(s));
    for (const std::string& s : alpha) config.alpha.push_back(parse_assignment(s));

    if (sweep_cmd->parsed()) {
      config.mode = Mode::OptimizeCc;
      if (!qmax_node.empty() && qmax_values.empty()) {
        throw input_error("cli_harness", "node " + qmax_node, "--qmax-node needs --qmax-values");
      }
      const SweepResult r = sweep(config, parse_values(epsilons), qmax_node, parse_values(qmax_values));
      std::cout << "sweep: " << r.rows.size() << " rows -> " << r.csv.string() << '\n';
      return r.exit_code;
    }
    config.mode = parse_mode(mode);
    const RunResult r = run(config);
    std::cout << r.summary << '\n';
    return r.exit_code;
  } catch (const Error& e) {
    std::cerr << "gasflow: error: " << e.what() << '\n';
    return e.kind() == Error::Kind::Input ? 1 : 3;
  } catch (const std::exception& e) {
    std::cerr << "gasflow: error: [cli_harness] " << e.what() << '\n';
    return 1;
  }
}
