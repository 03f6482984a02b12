#include "gasflow/network.hpp"

#include "gasflow/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

namespace gasflow {

using nlohmann::json;

namespace {

constexpr const char* kModule = "network_model";

[[noreturn]] void fail(const std::string& entity, const std::string& message) {
  throw input_error(kModule, entity, message);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& entity) {
  if (!obj.is_object()) fail(entity, "expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) fail(entity, "unknown key '" + key + "'");
  }
}

double number(const json& obj, const char* key, const std::string& entity) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(entity, std::string("missing required key '") + key + "'");
  if (!it->is_number()) fail(entity, std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

double number_or(const json& obj, const char* key, double fallback, const std::string& entity) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) fail(entity, std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

bool bool_or(const json& obj, const char* key, bool fallback, const std::string& entity) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) fail(entity, std::string("key '") + key + "' must be a boolean");
  return it->get<bool>();
}

std::string string_key(const json& obj, const char* key, const std::string& entity) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(entity, std::string("missing required key '") + key + "'");
  if (!it->is_string()) fail(entity, std::string("key '") + key + "' must be a string");
  return it->get<std::string>();
}

UncertaintySpec parse_uncertainty(const json& obj, const std::string& entity) {
  check_keys(obj, {"dist", "lo", "hi", "mean", "std"}, entity + " uncertainty");
  const std::string dist = string_key(obj, "dist", entity);
  const double lo = number(obj, "lo", entity);
  const double hi = number(obj, "hi", entity);
  if (dist == "uniform") return UncertaintySpec::uniform(lo, hi);
  if (dist == "truncated_normal") {
    return UncertaintySpec::truncated_normal(number(obj, "mean", entity), number(obj, "std", entity),
                                             lo, hi);
  }
  fail(entity, "uncertainty dist must be 'uniform' or 'truncated_normal', got '" + dist + "'");
}

Node parse_node(const json& obj) {
  const std::string entity = obj.is_object() && obj.contains("id") && obj["id"].is_string()
                                 ? "node " + obj["id"].get<std::string>()
                                 : "node";
  check_keys(obj,
             {"id", "kind", "slack_pressure", "pressure_min", "pressure_max", "demand", "supply",
              "demand_price", "supply_price", "demand_optimized", "supply_optimized", "demand_max",
              "supply_max", "epsilon", "uncertainty", "chance_constrained"},
             entity);
  Node n;
  n.id = string_key(obj, "id", entity);
  const std::string kind = string_key(obj, "kind", entity);
  if (kind == "slack") {
    n.kind = NodeKind::Slack;
    n.slack_pressure = number(obj, "slack_pressure", entity);
  } else if (kind == "flow") {
    n.kind = NodeKind::Flow;
    if (obj.contains("slack_pressure")) fail(entity, "slack_pressure given on a flow node");
  } else {
    fail(entity, "kind must be 'slack' or 'flow', got '" + kind + "'");
  }
  n.pressure_min = number(obj, "pressure_min", entity);
  n.pressure_max = number(obj, "pressure_max", entity);
  n.demand = number_or(obj, "demand", 0.0, entity);
  n.supply = number_or(obj, "supply", 0.0, entity);
  n.demand_price = number_or(obj, "demand_price", 0.0, entity);
  n.supply_price = number_or(obj, "supply_price", 0.0, entity);
  n.demand_optimized = bool_or(obj, "demand_optimized", false, entity);
  n.supply_optimized = bool_or(obj, "supply_optimized", false, entity);
  n.demand_max = number_or(obj, "demand_max", kInf, entity);
  n.supply_max = number_or(obj, "supply_max", kInf, entity);
  n.chance_constrained = bool_or(obj, "chance_constrained", false, entity);
  if (obj.contains("epsilon")) n.epsilon = number(obj, "epsilon", entity);
  if (obj.contains("uncertainty")) n.uncertainty = parse_uncertainty(obj["uncertainty"], entity);
  return n;
}

Pipe parse_pipe(const json& obj) {
  const std::string entity = obj.is_object() && obj.contains("id") && obj["id"].is_string()
                                 ? "pipe " + obj["id"].get<std::string>()
                                 : "pipe";
  check_keys(obj, {"id", "from", "to", "length", "diameter", "friction", "resistance"}, entity);
  Pipe p;
  p.id = string_key(obj, "id", entity);
  p.from = string_key(obj, "from", entity);
  p.to = string_key(obj, "to", entity);
  p.length = number(obj, "length", entity);
  p.diameter = number(obj, "diameter", entity);
  p.friction = number(obj, "friction", entity);
  if (obj.contains("resistance")) p.resistance = number(obj, "resistance", entity);
  return p;
}

Compressor parse_compressor(const json& obj) {
  const std::string entity = obj.is_object() && obj.contains("id") && obj["id"].is_string()
                                 ? "compressor " + obj["id"].get<std::string>()
                                 : "compressor";
  check_keys(obj, {"id", "from", "to", "alpha_max", "eta", "m"}, entity);
  Compressor c;
  c.id = string_key(obj, "id", entity);
  c.from = string_key(obj, "from", entity);
  c.to = string_key(obj, "to", entity);
  c.alpha_max = number(obj, "alpha_max", entity);
  c.eta = number(obj, "eta", entity);
  c.m = number_or(obj, "m", 1.0, entity);
  return c;
}

void validate_uncertainty(const UncertaintySpec& u, const std::string& entity) {
  if (!(std::isfinite(u.lo) && std::isfinite(u.hi))) fail(entity, "uncertainty bounds must be finite");
  if (!(u.lo < u.hi)) fail(entity, "uncertainty interval must satisfy lo < hi");
  if (u.dist == Distribution::TruncatedNormal && !(u.std > 0.0)) {
    fail(entity, "truncated normal std must be positive");
  }
}

void validate_node(const Node& n) {
  const std::string entity = "node " + n.id;
  if (n.id.empty()) fail("node", "empty id");
  if (!(n.pressure_min >= 0.0)) fail(entity, "pressure_min must be non-negative");
  if (!(n.pressure_min < n.pressure_max)) fail(entity, "pressure_min must be below pressure_max");
  if (n.demand < 0.0) fail(entity, "demand must be non-negative");
  if (n.supply < 0.0) fail(entity, "supply must be non-negative");
  if (n.demand > 0.0 && n.supply > 0.0) {
    fail(entity, "only one of demand or supply may be positive");
  }
  if (n.demand_optimized && n.supply_optimized) {
    fail(entity, "a node cannot optimize both demand and supply");
  }
  if ((n.demand_optimized && n.supply > 0.0) || (n.supply_optimized && n.demand > 0.0)) {
    fail(entity, "only one of demand or supply may be positive");
  }
  if (n.demand_max < 0.0 || n.supply_max < 0.0) fail(entity, "nomination bounds must be non-negative");
  if (n.epsilon && *n.epsilon < 0.0) fail(entity, "epsilon must be non-negative");
  if (n.is_slack()) {
    if (!(n.slack_pressure >= n.pressure_min && n.slack_pressure <= n.pressure_max)) {
      fail(entity, "slack_pressure must lie within [pressure_min, pressure_max]");
    }
    if (!(n.slack_pressure > 0.0)) fail(entity, "slack_pressure must be positive");
    if (n.demand_optimized || n.supply_optimized) {
      fail(entity, "optimized nominations are only allowed on flow nodes");
    }
    if (n.demand > 0.0 || n.supply > 0.0) fail(entity, "slack nodes take no fixed demand or supply");
    if (n.uncertainty) fail(entity, "slack nodes cannot carry uncertainty");
    if (n.chance_constrained) fail(entity, "slack nodes cannot be chance constrained");
  }
  if (n.uncertainty) validate_uncertainty(*n.uncertainty, entity);
}

}  // namespace

double Pipe::area() const { return std::numbers::pi * diameter * diameter / 4.0; }

double pipe_resistance(const Pipe& pipe, double wave_speed) {
  const double area = pipe.area();
  return wave_speed * wave_speed * pipe.friction * pipe.length / (area * area * pipe.diameter);
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (!(spec_.wave_speed > 0.0) || !std::isfinite(spec_.wave_speed)) {
    fail("network", "wave_speed must be positive");
  }
  if (spec_.nodes.empty()) fail("network", "no nodes");

  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(spec_.nodes.begin(), spec_.nodes.end(), by_id);
  std::sort(spec_.pipes.begin(), spec_.pipes.end(), by_id);
  std::sort(spec_.compressors.begin(), spec_.compressors.end(), by_id);

  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
    const Node& n = spec_.nodes[i];
    validate_node(n);
    if (i > 0 && spec_.nodes[i - 1].id == n.id) fail("node " + n.id, "duplicate node id");
    if (n.is_slack()) {
      slack_ = i;
      ++slack_count;
    }
  }
  if (slack_count == 0) fail("network", "no slack node");
  if (slack_count > 1) fail("network", "exactly one slack node is supported per connected network");

  std::set<std::string> edge_ids;
  auto endpoint = [&](const std::string& entity, const std::string& id) {
    auto idx = find_node(id);
    if (!idx) fail(entity, "unknown node '" + id + "'");
    return *idx;
  };
  for (std::size_t k = 0; k < spec_.pipes.size(); ++k) {
    const Pipe& p = spec_.pipes[k];
    const std::string entity = "pipe " + p.id;
    if (!edge_ids.insert(p.id).second) fail(entity, "duplicate edge id");
    if (!(p.length > 0.0 && p.diameter > 0.0 && p.friction > 0.0)) {
      fail(entity, "length, diameter and friction must be positive");
    }
    const std::size_t from = endpoint(entity, p.from);
    const std::size_t to = endpoint(entity, p.to);
    if (from == to) fail(entity, "self loop");
    const double kappa = pipe_resistance(p, spec_.wave_speed);
    if (p.resistance && std::abs(*p.resistance - kappa) > 1e-9 * std::abs(kappa)) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "stated resistance " << *p.resistance << " disagrees with computed " << kappa;
      fail(entity, msg.str());
    }
    kappa_.push_back(kappa);
    edges_.push_back({EdgeKind::Pipe, k, from, to, p.id});
  }
  for (std::size_t k = 0; k < spec_.compressors.size(); ++k) {
    const Compressor& c = spec_.compressors[k];
    const std::string entity = "compressor " + c.id;
    if (!edge_ids.insert(c.id).second) fail(entity, "duplicate edge id");
    if (!(c.alpha_max >= 1.0)) fail(entity, "alpha_max must be at least 1");
    if (!(c.eta >= 0.0)) fail(entity, "eta must be non-negative");
    if (!(c.m > 0.0 && c.m <= 1.0)) fail(entity, "exponent m must lie in (0, 1]");
    const std::size_t from = endpoint(entity, c.from);
    const std::size_t to = endpoint(entity, c.to);
    if (from == to) fail(entity, "self loop");
    edges_.push_back({EdgeKind::Compressor, k, from, to, c.id});
  }

  // Connectivity, ignoring edge direction.
  std::vector<std::vector<std::size_t>> adj(num_nodes());
  for (const Edge& e : edges_) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::vector<bool> seen(num_nodes(), false);
  std::queue<std::size_t> todo;
  todo.push(slack_);
  seen[slack_] = true;
  while (!todo.empty()) {
    const std::size_t v = todo.front();
    todo.pop();
    for (std::size_t w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        todo.push(w);
      }
    }
  }
  for (std::size_t i = 0; i < num_nodes(); ++i) {
    if (!seen[i]) fail("node " + spec_.nodes[i].id, "not connected to the slack node");
  }
}

std::optional<std::size_t> Network::find_node(std::string_view id) const {
  auto it = std::lower_bound(spec_.nodes.begin(), spec_.nodes.end(), id,
                             [](const Node& n, std::string_view key) { return n.id < key; });
  if (it == spec_.nodes.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - spec_.nodes.begin());
}

std::optional<std::size_t> Network::find_edge(std::string_view id) const {
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    if (edges_[k].id == id) return k;
  }
  return std::nullopt;
}

std::size_t Network::node_index(std::string_view id) const {
  auto idx = find_node(id);
  if (!idx) fail("node " + std::string(id), "unknown node");
  return *idx;
}

std::size_t Network::edge_index(std::string_view id) const {
  auto idx = find_edge(id);
  if (!idx) fail("edge " + std::string(id), "unknown edge");
  return *idx;
}

std::vector<std::size_t> Network::uncertain_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_nodes(); ++i) {
    if (spec_.nodes[i].uncertainty) out.push_back(i);
  }
  return out;
}

Network network_from_json(const json& doc) {
  check_keys(doc, {"wave_speed", "currency", "description", "nodes", "pipes", "compressors"},
             "network");
  NetworkSpec spec;
  spec.wave_speed = number(doc, "wave_speed", "network");
  if (doc.contains("currency")) spec.currency = string_key(doc, "currency", "network");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) fail("network", "'nodes' must be an array");
  for (const auto& n : doc["nodes"]) spec.nodes.push_back(parse_node(n));
  if (doc.contains("pipes")) {
    if (!doc["pipes"].is_array()) fail("network", "'pipes' must be an array");
    for (const auto& p : doc["pipes"]) spec.pipes.push_back(parse_pipe(p));
  }
  if (doc.contains("compressors")) {
    if (!doc["compressors"].is_array()) fail("network", "'compressors' must be an array");
    for (const auto& c : doc["compressors"]) spec.compressors.push_back(parse_compressor(c));
  }
  return Network(std::move(spec));
}

Network parse_network(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    fail("network", std::string("malformed JSON: ") + e.what());
  }
  return network_from_json(doc);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("network", "cannot read '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_network(buffer.str());
}

json network_to_json(const Network& net) {
  json doc;
  doc["wave_speed"] = net.wave_speed();
  if (!net.spec().currency.empty()) doc["currency"] = net.spec().currency;
  doc["nodes"] = json::array();
  for (const Node& n : net.nodes()) {
    json j;
    j["id"] = n.id;
    j["kind"] = n.is_slack() ? "slack" : "flow";
    if (n.is_slack()) j["slack_pressure"] = n.slack_pressure;
    j["pressure_min"] = n.pressure_min;
    j["pressure_max"] = n.pressure_max;
    if (n.demand != 0.0) j["demand"] = n.demand;
    if (n.supply != 0.0) j["supply"] = n.supply;
    if (n.demand_price != 0.0) j["demand_price"] = n.demand_price;
    if (n.supply_price != 0.0) j["supply_price"] = n.supply_price;
    if (n.demand_optimized) j["demand_optimized"] = true;
    if (n.supply_optimized) j["supply_optimized"] = true;
    if (std::isfinite(n.demand_max)) j["demand_max"] = n.demand_max;
    if (std::isfinite(n.supply_max)) j["supply_max"] = n.supply_max;
    if (n.epsilon) j["epsilon"] = *n.epsilon;
    if (n.chance_constrained) j["chance_constrained"] = true;
    if (n.uncertainty) {
      const UncertaintySpec& u = *n.uncertainty;
      json uj{{"lo", u.lo}, {"hi", u.hi}};
      if (u.dist == Distribution::Uniform) {
        uj["dist"] = "uniform";
      } else {
        uj["dist"] = "truncated_normal";
        uj["mean"] = u.mean;
        uj["std"] = u.std;
      }
      j["uncertainty"] = uj;
    }
    doc["nodes"].push_back(j);
  }
  doc["pipes"] = json::array();
  for (const Pipe& p : net.pipes()) {
    json j{{"id", p.id},           {"from", p.from},         {"to", p.to},
           {"length", p.length}, {"diameter", p.diameter}, {"friction", p.friction}};
    if (p.resistance) j["resistance"] = *p.resistance;
    doc["pipes"].push_back(j);
  }
  doc["compressors"] = json::array();
  for (const Compressor& c : net.compressors()) {
    doc["compressors"].push_back({{"id", c.id},
                                  {"from", c.from},
                                  {"to", c.to},
                                  {"alpha_max", c.alpha_max},
                                  {"eta", c.eta},
                                  {"m", c.m}});
  }
  return doc;
}

Eigen::SparseMatrix<double> incidence(const Network& net) {
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(net.num_nodes()),
                                static_cast<Eigen::Index>(net.num_edges()));
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * net.num_edges());
  for (std::size_t k = 0; k < net.num_edges(); ++k) {
    const Edge& e = net.edges()[k];
    entries.emplace_back(static_cast<int>(e.to), static_cast<int>(k), 1.0);
    entries.emplace_back(static_cast<int>(e.from), static_cast<int>(k), -1.0);
  }
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

}  // namespace gasflow
