#pragma once

#include "gasflow/network.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gasflow {

enum class Mode { Simulate, OptimizeDet, OptimizeCc, Validate, Prices };

/// Accepts simulate, opt-det, opt-cc, validate, prices (and det / cc as short forms).
Mode parse_mode(const std::string& text);
const char* to_string(Mode mode);

struct RunConfig {
  std::filesystem::path network_path;
  Mode mode = Mode::OptimizeCc;
  int cells = 50;
  std::optional<double> epsilon;  // overrides every chance node's epsilon
  double gamma = 1.0;
  double delta = 1e-3;
  int mc_samples = 10000;
  std::uint64_t seed = 7;
  int threads = 1;
  bool shared_nominations = false;
  std::filesystem::path out_dir = "out";
  /// Upper bounds of optimized nominations, by node id (infinity allowed).
  std::vector<std::pair<std::string, double>> qmax;
  /// Fixed compressor ratios for simulate mode, by compressor id (default 1).
  std::vector<std::pair<std::string, double>> alpha;
  /// Extra distribution selectors such as "flow@P1".
  std::vector<std::string> distributions;
};

/// Parses "ID=VALUE"; VALUE may be inf.
std::pair<std::string, double> parse_assignment(const std::string& text);

/// Network with the overrides of `config` applied.
Network prepare_network(const RunConfig& config);

struct RunResult {
  int exit_code = 0;  // 0 optimal / converged, 2 iteration limit, 3 infeasible
  std::string summary;
  std::vector<std::filesystem::path> artifacts;
};

/// Runs one mode and writes its artifacts into config.out_dir. Throws gasflow::Error on bad input.
RunResult run(const RunConfig& config);

struct SweepRow {
  double epsilon = 0.0;
  std::optional<double> qmax;
  std::string status;
  std::string error;
  std::vector<double> alpha;
  double objective = 0.0;
  std::vector<double> expected_demand;  // per optimized demand node
  double sfv_expectation = 0.0;
  double mc_violation = 0.0;
  double mc_violation_se = 0.0;
  double mc_mean_penalty = 0.0;
  double mc_penalty_se = 0.0;
};

struct SweepResult {
  int exit_code = 0;
  std::filesystem::path csv;
  std::vector<SweepRow> rows;
};

/// Chance-constrained solves for every epsilon (ascending) or, when `qmax_node` is set, for
/// every upper bound in `qmax_values` at that node. Failed solves are recorded in their row.
SweepResult sweep(const RunConfig& config, std::vector<double> epsilons, const std::string& qmax_node = {},
                  std::vector<double> qmax_values = {});

}  // namespace gasflow
