#include "gasflow/io.hpp"

#include "gasflow/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace gasflow {

using nlohmann::json;

namespace {

json mc_to_json(const ViolationEstimate& e) {
  json j{{"samples", e.samples},
         {"failures", e.failures},
         {"violation_fraction", e.violation_fraction},
         {"violation_se", e.violation_se},
         {"mean_penalty", e.mean_penalty},
         {"penalty_se", e.penalty_se}};
  if (!e.failure_messages.empty()) j["failure_messages"] = e.failure_messages;
  return j;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

json solution_to_json(const CcSolution& sol, const Network& net, std::span<const ViolationEstimate> mc) {
  json doc;
  doc["status"] = to_string(sol.status);
  doc["message"] = sol.message;
  doc["iterations"] = sol.iterations;
  doc["objective"] = sol.objective;
  doc["expected_compressor_power"] = sol.expected_compressor_power;
  doc["expected_economic_value"] = sol.expected_economic_value;
  doc["gamma"] = sol.gamma;
  doc["recourse_nominations"] = sol.recourse;
  if (!sol.uncertain_node.empty()) doc["uncertain_node"] = sol.uncertain_node;
  doc["kkt"] = {{"stationarity", sol.kkt.stationarity},
                {"feasibility", sol.kkt.feasibility},
                {"complementarity", sol.kkt.complementarity}};

  json alpha = json::object();
  for (std::size_t c = 0; c < sol.alpha.size(); ++c) alpha[net.compressors()[c].id] = sol.alpha[c];
  doc["alpha"] = alpha;

  json d = json::object(), s = json::object(), lambda_d = json::object(), lambda_s = json::object();
  for (std::size_t j = 0; j < net.num_nodes(); ++j) {
    const Node& n = net.nodes()[j];
    auto per_cell = [&](auto get) {
      if (!sol.recourse) return json(get(sol.cells.front()));
      json arr = json::array();
      for (const CellSolution& c : sol.cells) arr.push_back(get(c));
      return arr;
    };
    if (n.demand_optimized) {
      d[n.id] = sol.expected_demand(j);
      lambda_d[n.id] = per_cell([j](const CellSolution& c) { return c.lambda_d[j]; });
    }
    if (n.supply_optimized) {
      s[n.id] = sol.expected_supply(j);
      lambda_s[n.id] = per_cell([j](const CellSolution& c) { return c.lambda_s[j]; });
    }
  }
  doc["d"] = d;
  doc["s"] = s;
  doc["lambda_d"] = lambda_d;
  doc["lambda_s"] = lambda_s;

  json cells = json::array();
  for (std::size_t k = 0; k < sol.cells.size(); ++k) {
    const CellSolution& c = sol.cells[k];
    json cj;
    cj["index"] = k;
    cj["omega"] = c.omega;
    cj["mass"] = c.mass;
    json pressures = json::object(), flows = json::object(), lq = json::object(), lqm = json::object();
    json cd = json::object(), cs = json::object();
    const std::vector<double> p = c.pressure();
    for (std::size_t j = 0; j < net.num_nodes(); ++j) {
      const Node& n = net.nodes()[j];
      pressures[n.id] = p[j];
      if (j == net.slack_index()) continue;
      lq[n.id] = c.lambda_q[j];
      lqm[n.id] = c.mass > 0.0 ? c.lambda_q[j] / c.mass : 0.0;
      if (n.demand_optimized) cd[n.id] = c.d[j];
      if (n.supply_optimized) cs[n.id] = c.s[j];
    }
    for (std::size_t e = 0; e < net.num_edges(); ++e) flows[net.edges()[e].id] = c.phi[e];
    cj["pressures"] = pressures;
    cj["flows"] = flows;
    cj["lambda_q"] = lq;
    cj["lambda_q_per_mass"] = lqm;
    cj["d"] = cd;
    cj["s"] = cs;
    cells.push_back(cj);
  }
  doc["cells"] = cells;

  json chance = json::array();
  for (std::size_t i = 0; i < sol.chance.size(); ++i) {
    const ChanceSolution& ch = sol.chance[i];
    json cj{{"node", ch.node},
            {"epsilon", ch.epsilon},
            {"sfv_expectation", ch.sfv_expectation},
            {"lambda_cc", ch.lambda_cc},
            {"coefficients", ch.coefficients}};
    for (const ViolationEstimate& e : mc) {
      if (e.node == ch.node) cj["mc_estimate"] = mc_to_json(e);
    }
    chance.push_back(cj);
  }
  doc["chance"] = chance;
  return doc;
}

json steady_to_json(const SteadyState& st, const Network& net, std::span<const double> alpha) {
  json doc;
  json a = json::object(), pressures = json::object(), flows = json::object();
  for (std::size_t c = 0; c < alpha.size(); ++c) a[net.compressors()[c].id] = alpha[c];
  const std::vector<double> p = st.pressure();
  for (std::size_t j = 0; j < net.num_nodes(); ++j) pressures[net.nodes()[j].id] = p[j];
  for (std::size_t e = 0; e < net.num_edges(); ++e) flows[net.edges()[e].id] = st.phi[e];
  doc["alpha"] = a;
  doc["pressures"] = pressures;
  doc["flows"] = flows;
  doc["slack_withdrawal"] = st.slack_withdrawal;
  doc["iterations"] = st.iterations;
  doc["residual_norm"] = st.residual_norm;
  doc["residual_history"] = st.residual_history;
  return doc;
}

json kkt_report_to_json(const KktReport& r) {
  json doc{{"status", r.status},       {"at_kkt_point", r.at_kkt_point}, {"cells", r.cells},
           {"recourse_nominations", r.recourse}, {"tolerance", r.tolerance}, {"pass", r.pass}};
  if (!r.note.empty()) doc["note"] = r.note;
  json nodes = json::array();
  for (const KktNodeReport& n : r.nodes) {
    json rows = json::array();
    for (const KktRow& row : n.rows) {
      rows.push_back({{"cell", row.cell},
                      {"omega", row.omega},
                      {"mass", row.mass},
                      {"lambda_q", row.lambda_q},
                      {n.supply ? "lambda_s" : "lambda_d", row.lambda_bound},
                      {"reference", row.reference},
                      {"residual", row.residual}});
    }
    nodes.push_back({{"node", n.node},
                     {"nomination", n.supply ? "supply" : "demand"},
                     {"price", n.price},
                     {"uniform_reference", n.uniform_reference},
                     {"max_residual", n.max_residual},
                     {"max_uniform_residual", n.max_uniform_residual},
                     {"rows", rows}});
  }
  doc["nodes"] = nodes;
  return doc;
}

json violation_to_json(std::span<const ViolationEstimate> estimates) {
  json arr = json::array();
  for (const ViolationEstimate& e : estimates) {
    json j = mc_to_json(e);
    j["node"] = e.node;
    j["epsilon"] = e.epsilon;
    j["sfv_expectation"] = e.sfv_expectation;
    j["within_tolerance"] = e.mean_penalty <= e.epsilon + 3.0 * e.penalty_se + 0.02 * e.epsilon;
    arr.push_back(j);
  }
  return json{{"chance", arr}};
}

void write_discrete_csv(std::ostream& out, const ValueDistribution& dist) {
  out << "omega,mass,value\n";
  for (std::size_t k = 0; k < dist.support.size(); ++k) {
    out << format_number(dist.omega[k]) << ',' << format_number(dist.mass[k]) << ','
        << format_number(dist.support[k]) << '\n';
  }
}

void write_density_csv(std::ostream& out, const ValueDistribution& dist) {
  out << "grid,density\n";
  for (std::size_t i = 0; i < dist.grid.size(); ++i) {
    out << format_number(dist.grid[i]) << ',' << format_number(dist.density[i]) << '\n';
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw input_error("cli_harness", path.string(), "cannot open file for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace gasflow
