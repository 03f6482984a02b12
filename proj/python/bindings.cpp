#include "gasflow/error.hpp"
#include "gasflow/io.hpp"
#include "gasflow/ogf.hpp"
#include "gasflow/pricing.hpp"
#include "gasflow/run.hpp"
#include "gasflow/steady.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include <optional>

namespace py = pybind11;
using namespace gasflow;

namespace {

/// A solved problem together with the grid it was solved on.
struct Solution {
  Network net;
  std::optional<StochasticGrid> grid;
  CcSolution sol;
};

std::vector<std::string> node_ids(const Network& net) {
  std::vector<std::string> ids;
  for (const Node& n : net.nodes()) ids.push_back(n.id);
  return ids;
}

std::vector<std::string> edge_ids(const Network& net) {
  std::vector<std::string> ids;
  for (const Edge& e : net.edges()) ids.push_back(e.id);
  return ids;
}

const StochasticGrid& require_grid(const Solution& s) {
  if (!s.grid) throw input_error("cli_harness", "", "deterministic solutions have no stochastic grid");
  return *s.grid;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chance-constrained optimal gas flow";
  py::register_exception<Error>(m, "GasflowError", PyExc_RuntimeError);
  const char* level = std::getenv("GASFLOW_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);

  py::class_<Network>(m, "Network")
      .def_static("from_file", [](const std::filesystem::path& p) { return load_network(p); })
      .def_static("from_json", [](const std::string& doc) { return parse_network(doc); })
      .def("to_json", [](const Network& n) { return network_to_json(n).dump(); })
      .def_property_readonly("node_ids", &node_ids)
      .def_property_readonly("edge_ids", &edge_ids)
      .def_property_readonly("slack", [](const Network& n) { return n.nodes()[n.slack_index()].id; })
      .def_property_readonly("uncertain_nodes", [](const Network& n) {
        std::vector<std::string> ids;
        for (std::size_t j : n.uncertain_nodes()) ids.push_back(n.nodes()[j].id);
        return ids;
      });

  m.def(
      "steady",
      [](const Network& net, const std::vector<double>& alpha, const std::vector<double>& withdrawal) {
        py::gil_scoped_release release;
        return steady_to_json(solve_steady(net, alpha, withdrawal), net, alpha).dump();
      },
      py::arg("network"), py::arg("alpha"), py::arg("withdrawal"));

  py::class_<Solution>(m, "Solution")
      .def_property_readonly("status", [](const Solution& s) { return std::string(to_string(s.sol.status)); })
      .def_property_readonly("objective", [](const Solution& s) { return s.sol.objective; })
      .def_property_readonly("alpha", [](const Solution& s) { return s.sol.alpha; })
      .def("to_json", [](const Solution& s) { return solution_to_json(s.sol, s.net).dump(); })
      .def(
          "kkt_report",
          [](const Solution& s, double tol) { return kkt_report_to_json(kkt_report(s.sol, s.net, tol)).dump(); },
          py::arg("tolerance") = 1e-5)
      .def(
          "violation",
          [](const Solution& s, int samples, std::uint64_t seed, int threads) {
            py::gil_scoped_release release;
            const auto est = violation_probability(s.sol, s.net, require_grid(s), {samples, seed, threads});
            return violation_to_json(est).dump();
          },
          py::arg("samples") = 10000, py::arg("seed") = 7, py::arg("threads") = 1)
      .def(
          "distribution",
          [](const Solution& s, const std::string& selector, int samples) {
            const ValueDistribution d =
                distribution_of(s.sol, s.net, Selector::parse(selector), require_grid(s), {samples, 512});
            py::dict out;
            out["omega"] = d.omega;
            out["mass"] = d.mass;
            out["values"] = d.support;
            out["grid"] = d.grid;
            out["density"] = d.density;
            out["bandwidth"] = d.bandwidth;
            return out;
          },
          py::arg("selector"), py::arg("samples") = 10000);

  m.def(
      "optimize",
      [](const Network& net, int cells, double gamma, double delta, bool deterministic, bool shared) {
        OgfOptions o;
        o.penalty.gamma = gamma;
        o.penalty.delta = delta;
        o.recourse_nominations = !shared;
        py::gil_scoped_release release;
        if (deterministic) return Solution{net, std::nullopt, solve_deterministic(net, o)};
        StochasticGrid grid = grid_for(net, cells);
        CcSolution sol = solve_chance_constrained(net, grid, o);
        return Solution{net, std::move(grid), std::move(sol)};
      },
      py::arg("network"), py::arg("cells") = 50, py::arg("gamma") = 1.0, py::arg("delta") = 1e-3,
      py::arg("deterministic") = false, py::arg("shared_nominations") = false);

  m.def(
      "run",
      [](const std::string& mode, const std::filesystem::path& network, const std::filesystem::path& out,
         int cells, double gamma, std::optional<double> epsilon, int mc_samples, std::uint64_t seed) {
        RunConfig c;
        c.mode = parse_mode(mode);
        c.network_path = network;
        c.out_dir = out;
        c.cells = cells;
        c.gamma = gamma;
        c.epsilon = epsilon;
        c.mc_samples = mc_samples;
        c.seed = seed;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run(c);
        }
        return py::make_tuple(r.exit_code, r.summary, r.artifacts);
      },
      py::arg("mode"), py::arg("network"), py::arg("out_dir"), py::arg("cells") = 50, py::arg("gamma") = 1.0,
      py::arg("epsilon") = std::nullopt, py::arg("mc_samples") = 10000, py::arg("seed") = 7);
}
