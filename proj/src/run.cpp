#include "gasflow/run.hpp"

#include "gasflow/error.hpp"
#include "gasflow/io.hpp"
#include "gasflow/ogf.hpp"
#include "gasflow/pricing.hpp"
#include "gasflow/steady.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gasflow {

namespace {

constexpr const char* kModule = "cli_harness";

int exit_code(NlpStatus status) {
  switch (status) {
    case NlpStatus::Optimal: return 0;
    case NlpStatus::MaxIter: return 2;
    case NlpStatus::Infeasible: return 3;
  }
  return 3;
}

OgfOptions ogf_options(const RunConfig& config) {
  OgfOptions o;
  o.penalty.gamma = config.gamma;
  o.penalty.delta = config.delta;
  o.recourse_nominations = !config.shared_nominations;
  return o;
}

std::string file_stem(const std::string& selector) {
  std::string s = selector;
  std::replace(s.begin(), s.end(), '@', '_');
  std::replace_if(s.begin(), s.end(), [](char c) { return !(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'); }, '_');
  return s;
}

void write_distribution(const CcSolution& sol, const Network& net, const StochasticGrid& grid,
                        const std::string& selector, const std::filesystem::path& dir,
                        std::vector<std::filesystem::path>& artifacts) {
  const ValueDistribution dist = distribution_of(sol, net, Selector::parse(selector), grid);
  const std::filesystem::path discrete = dir / ("dist_" + file_stem(selector) + "_discrete.csv");
  const std::filesystem::path density = dir / ("dist_" + file_stem(selector) + "_density.csv");
  std::ofstream a(discrete);
  write_discrete_csv(a, dist);
  std::ofstream b(density);
  write_density_csv(b, dist);
  artifacts.push_back(discrete);
  artifacts.push_back(density);
}

std::string summary_line(const CcSolution& sol) {
  std::ostringstream s;
  s << "status=" << to_string(sol.status) << " objective=" << format_number(sol.objective);
  if (sol.chance.empty()) {
    s << " max_chance_slack=n/a";
  } else {
    double slack = -kInf;
    for (const ChanceSolution& c : sol.chance) slack = std::max(slack, c.epsilon - c.sfv_expectation);
    s << " max_chance_slack=" << format_number(slack);
  }
  s << " alpha=";
  for (std::size_t c = 0; c < sol.alpha.size(); ++c) s << (c ? "," : "") << format_number(sol.alpha[c]);
  return s.str();
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw input_error(kModule, dir.string(), "cannot create output directory");
  }
}

RunResult run_simulate(const RunConfig& config, const Network& net) {
  std::vector<double> alpha(net.compressors().size(), 1.0);
  for (const auto& [id, value] : config.alpha) {
    const auto it = std::find_if(net.compressors().begin(), net.compressors().end(),
                                 [&](const Compressor& c) { return c.id == id; });
    if (it == net.compressors().end()) throw input_error(kModule, "compressor " + id, "unknown compressor in --alpha");
    alpha[static_cast<std::size_t>(it - net.compressors().begin())] = value;
  }
  std::vector<double> q(net.num_nodes());
  for (std::size_t j = 0; j < net.num_nodes(); ++j) {
    const Node& n = net.nodes()[j];
    q[j] = n.demand - n.supply + (n.uncertainty ? n.uncertainty->expected_value() : 0.0);
  }
  const SteadyState st = solve_steady(net, alpha, q);
  RunResult r;
  const std::filesystem::path path = config.out_dir / "state.json";
  write_json(path, steady_to_json(st, net, alpha));
  r.artifacts.push_back(path);
  std::ostringstream s;
  s << "status=Converged iterations=" << st.iterations << " residual=" << format_number(st.residual_norm)
    << " slack_withdrawal=" << format_number(st.slack_withdrawal);
  r.summary = s.str();
  return r;
}

RunResult run_deterministic(const RunConfig& config, const Network& net) {
  for (std::size_t j : net.uncertain_nodes()) {
    spdlog::warn("deterministic mode ignores the uncertainty at node {}; solving at its mean withdrawal",
                 net.nodes()[j].id);
  }
  const CcSolution sol = solve_deterministic(net, ogf_options(config));
  RunResult r;
  r.exit_code = exit_code(sol.status);
  write_json(config.out_dir / "solution.json", solution_to_json(sol, net));
  write_json(config.out_dir / "kkt_report.json", kkt_report_to_json(kkt_report(sol, net)));
  r.artifacts = {config.out_dir / "solution.json", config.out_dir / "kkt_report.json"};
  r.summary = summary_line(sol);
  return r;
}

RunResult run_chance_constrained(const RunConfig& config, const Network& net) {
  if (config.cells < kMinCells) {
    throw input_error(kModule, "cells", "chance-constrained modes need at least 4 cells");
  }
  const StochasticGrid grid = grid_for(net, config.cells);
  const CcSolution sol = solve_chance_constrained(net, grid, ogf_options(config));
  RunResult r;
  r.exit_code = exit_code(sol.status);

  std::vector<ViolationEstimate> mc;
  if (config.mode == Mode::Validate) {
    MonteCarloOptions mo;
    mo.samples = config.mc_samples;
    mo.seed = config.seed;
    mo.threads = config.threads;
    mc = violation_probability(sol, net, grid, mo);
    write_json(config.out_dir / "violation_report.json", violation_to_json(mc));
    r.artifacts.push_back(config.out_dir / "violation_report.json");
  }
  write_json(config.out_dir / "solution.json", solution_to_json(sol, net, mc));
  write_json(config.out_dir / "kkt_report.json", kkt_report_to_json(kkt_report(sol, net)));
  r.artifacts.push_back(config.out_dir / "solution.json");
  r.artifacts.push_back(config.out_dir / "kkt_report.json");

  std::vector<std::string> selectors;
  for (const ChanceSolution& c : sol.chance) selectors.push_back("pressure@" + c.node);
  if (config.mode == Mode::Prices) {
    for (std::size_t j = 0; j < net.num_nodes(); ++j) {
      const Node& n = net.nodes()[j];
      if (j == net.slack_index()) continue;
      selectors.push_back("lambda_q@" + n.id);
      if (n.demand_optimized) {
        selectors.push_back("lambda_d@" + n.id);
        selectors.push_back("d@" + n.id);
      }
    }
  }
  for (const std::string& s : config.distributions) selectors.push_back(s);
  for (const std::string& s : selectors) write_distribution(sol, net, grid, s, config.out_dir, r.artifacts);

  r.summary = summary_line(sol);
  if (!mc.empty()) {
    std::ostringstream s;
    for (const ViolationEstimate& e : mc) {
      s << " mc[" << e.node << "]=" << format_number(e.mean_penalty) << "+-" << format_number(e.penalty_se)
        << " p_violation=" << format_number(e.violation_fraction);
      if (e.failures) s << " failures=" << e.failures;
    }
    r.summary += s.str();
  }
  return r;
}

}  // namespace

Mode parse_mode(const std::string& text) {
  if (text == "simulate") return Mode::Simulate;
  if (text == "opt-det" || text == "det") return Mode::OptimizeDet;
  if (text == "opt-cc" || text == "cc") return Mode::OptimizeCc;
  if (text == "validate") return Mode::Validate;
  if (text == "prices") return Mode::Prices;
  throw input_error(kModule, "mode", "unknown mode '" + text + "'");
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Simulate: return "simulate";
    case Mode::OptimizeDet: return "opt-det";
    case Mode::OptimizeCc: return "opt-cc";
    case Mode::Validate: return "validate";
    case Mode::Prices: return "prices";
  }
  return "?";
}

std::pair<std::string, double> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw input_error(kModule, text, "expected ID=VALUE");
  }
  const std::string id = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);
  if (value == "inf" || value == "infinity" || value == "Inf") return {id, kInf};
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return {id, v};
  } catch (const std::exception&) {
    throw input_error(kModule, text, "value is not a number");
  }
}

Network prepare_network(const RunConfig& config) {
  NetworkSpec spec = load_network(config.network_path).spec();
  for (const auto& [id, value] : config.qmax) {
    auto it = std::find_if(spec.nodes.begin(), spec.nodes.end(), [&](const Node& n) { return n.id == id; });
    if (it == spec.nodes.end()) throw input_error(kModule, "node " + id, "unknown node in --qmax");
    if (!(value > 0.0)) throw input_error(kModule, "node " + id, "--qmax must be positive");
    if (it->demand_optimized) {
      it->demand_max = value;
    } else if (it->supply_optimized) {
      it->supply_max = value;
    } else {
      throw input_error(kModule, "node " + id, "--qmax applies to optimized nominations only");
    }
  }
  if (config.epsilon) {
    if (!(*config.epsilon > 0.0)) throw input_error(kModule, "epsilon", "epsilon must be positive");
    for (Node& n : spec.nodes) {
      if (n.relaxes_pressure_min()) n.epsilon = *config.epsilon;
    }
  }
  return Network(std::move(spec));
}

RunResult run(const RunConfig& config) {
  const Network net = prepare_network(config);
  ensure_dir(config.out_dir);
  switch (config.mode) {
    case Mode::Simulate: return run_simulate(config, net);
    case Mode::OptimizeDet: return run_deterministic(config, net);
    default: return run_chance_constrained(config, net);
  }
}

SweepResult sweep(const RunConfig& config, std::vector<double> epsilons, const std::string& qmax_node,
                  std::vector<double> qmax_values) {
  if (config.cells < kMinCells) {
    throw input_error(kModule, "cells", "chance-constrained modes need at least 4 cells");
  }
  const Network base = prepare_network(config);
  ensure_dir(config.out_dir);
  std::sort(epsilons.begin(), epsilons.end());
  std::vector<std::size_t> optimized;
  for (std::size_t j = 0; j < base.num_nodes(); ++j) {
    if (base.nodes()[j].demand_optimized) optimized.push_back(j);
  }

  struct Case {
    std::optional<double> epsilon;
    std::optional<double> qmax;
  };
  std::vector<Case> cases;
  if (!qmax_node.empty()) {
    if (!base.find_node(qmax_node)) throw input_error(kModule, "node " + qmax_node, "unknown node in sweep");
    if (epsilons.empty()) {
      for (double q : qmax_values) cases.push_back({config.epsilon, q});
    } else {
      for (double e : epsilons) {
        for (double q : qmax_values) cases.push_back({e, q});
      }
    }
  } else {
    for (double e : epsilons) cases.push_back({e, std::nullopt});
  }

  SweepResult result;
  for (const Case& c : cases) {
    SweepRow row;
    row.qmax = c.qmax;
    try {
      RunConfig rc = config;
      rc.epsilon = c.epsilon;
      if (c.qmax) rc.qmax.emplace_back(qmax_node, *c.qmax);
      const Network net = prepare_network(rc);
      for (const Node& n : net.nodes()) {
        if (n.relaxes_pressure_min() && n.epsilon) row.epsilon = *n.epsilon;
      }
      const StochasticGrid grid = grid_for(net, rc.cells);
      const CcSolution sol = solve_chance_constrained(net, grid, ogf_options(rc));
      row.status = to_string(sol.status);
      row.alpha = sol.alpha;
      row.objective = sol.objective;
      for (std::size_t j : optimized) row.expected_demand.push_back(sol.expected_demand(j));
      if (!sol.chance.empty()) row.sfv_expectation = sol.chance.front().sfv_expectation;
      if (rc.mc_samples > 0 && !sol.chance.empty()) {
        MonteCarloOptions mo;
        mo.samples = rc.mc_samples;
        mo.seed = rc.seed;
        mo.threads = rc.threads;
        const std::vector<ViolationEstimate> mc = violation_probability(sol, net, grid, mo);
        row.mc_violation = mc.front().violation_fraction;
        row.mc_violation_se = mc.front().violation_se;
        row.mc_mean_penalty = mc.front().mean_penalty;
        row.mc_penalty_se = mc.front().penalty_se;
      }
      if (sol.status != NlpStatus::Optimal) result.exit_code = exit_code(sol.status);
    } catch (const Error& e) {
      row.status = "Error";
      row.error = e.what();
      result.exit_code = 3;
    }
    result.rows.push_back(std::move(row));
  }

  result.csv = config.out_dir / "sweep.csv";
  std::ofstream out(result.csv);
  if (!out) throw input_error(kModule, result.csv.string(), "cannot open file for writing");
  out << "epsilon,qmax,status";
  for (const Compressor& c : base.compressors()) out << ",alpha_" << c.id;
  out << ",objective";
  for (std::size_t j : optimized) out << ",expected_d_" << base.nodes()[j].id;
  out << ",sfv_expectation,mc_violation,mc_violation_se,mc_mean_penalty,mc_penalty_se,error\n";
  for (const SweepRow& r : result.rows) {
    out << format_number(r.epsilon) << ',' << (r.qmax ? format_number(*r.qmax) : "") << ',' << r.status;
    for (std::size_t c = 0; c < base.compressors().size(); ++c) {
      out << ',' << (c < r.alpha.size() ? format_number(r.alpha[c]) : "");
    }
    out << ',' << format_number(r.objective);
    for (std::size_t i = 0; i < optimized.size(); ++i) {
      out << ',' << (i < r.expected_demand.size() ? format_number(r.expected_demand[i]) : "");
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    out << ',' << format_number(r.sfv_expectation) << ',' << format_number(r.mc_violation) << ','
        << format_number(r.mc_violation_se) << ',' << format_number(r.mc_mean_penalty) << ','
        << format_number(r.mc_penalty_se) << ",\"" << err << "\"\n";
  }
  return result;
}

}  // namespace gasflow
