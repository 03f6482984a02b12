#pragma once

#include <Eigen/SparseCore>
#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gasflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class NodeKind { Slack, Flow };
enum class Distribution { Uniform, TruncatedNormal };

/// Random withdrawal r added to a node's base demand, in kg/s, supported on [lo, hi].
struct UncertaintySpec {
  Distribution dist = Distribution::Uniform;
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;  // truncated normal only (location of the parent normal)
  double std = 1.0;   // truncated normal only

  static UncertaintySpec uniform(double lo, double hi) {
    return {Distribution::Uniform, lo, hi, 0.5 * (lo + hi), 0.0};
  }
  static UncertaintySpec truncated_normal(double mean, double std, double lo, double hi) {
    return {Distribution::TruncatedNormal, lo, hi, mean, std};
  }

  double cdf(double r) const;
  double pdf(double r) const;
  /// Exact mean of the (possibly truncated) measure.
  double expected_value() const;
  double variance() const;
};

struct Node {
  std::string id;
  NodeKind kind = NodeKind::Flow;
  double slack_pressure = 0.0;  // Pa, slack nodes only
  double pressure_min = 0.0;    // Pa
  double pressure_max = kInf;   // Pa
  double demand = 0.0;          // base withdrawal d_j, kg/s
  double supply = 0.0;          // base injection s_j, kg/s
  double demand_price = 0.0;
  double supply_price = 0.0;
  bool demand_optimized = false;
  bool supply_optimized = false;
  double demand_max = kInf;
  double supply_max = kInf;
  std::optional<UncertaintySpec> uncertainty;
  std::optional<double> epsilon;
  bool chance_constrained = false;  // explicit flag; uncertain nodes are chance constrained implicitly

  bool is_slack() const { return kind == NodeKind::Slack; }
  bool relaxes_pressure_min() const { return chance_constrained || uncertainty.has_value(); }
};

struct Pipe {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;    // m
  double diameter = 0.0;  // m
  double friction = 0.0;  // Darcy friction factor, dimensionless
  std::optional<double> resistance;  // optional stated kappa, checked against the recomputed value

  double area() const;
};

struct Compressor {
  std::string id;
  std::string from;
  std::string to;
  double alpha_max = 1.0;
  double eta = 0.0;
  double m = 1.0;
};

/// kappa = a^2 lambda L / (A^2 D), in Pa^2 per (kg/s)^2.
double pipe_resistance(const Pipe& pipe, double wave_speed);

/// Plain description of a network, freely editable before being validated into a Network.
struct NetworkSpec {
  double wave_speed = 0.0;
  std::string currency;
  std::vector<Node> nodes;
  std::vector<Pipe> pipes;
  std::vector<Compressor> compressors;
};

enum class EdgeKind { Pipe, Compressor };

/// Unified view of pipes and compressors. Column order of the incidence matrix:
/// all pipes sorted by id, then all compressors sorted by id.
struct Edge {
  EdgeKind kind;
  std::size_t index;  // into pipes() or compressors()
  std::size_t from;   // node index
  std::size_t to;     // node index
  std::string id;
};

/// Validated, immutable pipeline network with lexicographically ordered nodes and edges.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  double wave_speed() const { return spec_.wave_speed; }
  const std::vector<Node>& nodes() const { return spec_.nodes; }
  const std::vector<Pipe>& pipes() const { return spec_.pipes; }
  const std::vector<Compressor>& compressors() const { return spec_.compressors; }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Resistance of each pipe in pipes() order.
  const std::vector<double>& resistances() const { return kappa_; }

  std::size_t num_nodes() const { return spec_.nodes.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t slack_index() const { return slack_; }

  std::size_t node_index(std::string_view id) const;
  std::size_t edge_index(std::string_view id) const;
  std::optional<std::size_t> find_node(std::string_view id) const;
  std::optional<std::size_t> find_edge(std::string_view id) const;

  /// Indices of nodes carrying an uncertainty spec.
  std::vector<std::size_t> uncertain_nodes() const;

 private:
  NetworkSpec spec_;
  std::vector<Edge> edges_;
  std::vector<double> kappa_;
  std::size_t slack_ = 0;
};

Network parse_network(std::string_view document);
Network network_from_json(const nlohmann::json& document);
Network load_network(const std::filesystem::path& path);
nlohmann::json network_to_json(const Network& net);

/// Signed |V| x |E| node-edge incidence: +1 where an edge enters a node, -1 where it leaves.
Eigen::SparseMatrix<double> incidence(const Network& net);

}  // namespace gasflow
