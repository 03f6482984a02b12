#include "gasflow/error.hpp"
#include "gasflow/network.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace gasflow;
using nlohmann::json;

namespace {

json single_pipe_doc() {
  return json::parse(R"({
    "wave_speed": 377.0,
    "nodes": [
      {"id": "N1", "kind": "slack", "slack_pressure": 4.3367e6, "pressure_min": 4e6, "pressure_max": 6e6},
      {"id": "N2", "kind": "flow", "pressure_min": 4e6, "pressure_max": 6e6},
      {"id": "N3", "kind": "flow", "pressure_min": 4e6, "pressure_max": 6e6, "demand": 250.0,
       "epsilon": 0.05, "uncertainty": {"dist": "uniform", "lo": -50, "hi": 50}}
    ],
    "pipes": [{"id": "P1", "from": "N2", "to": "N3", "length": 20000, "diameter": 0.9, "friction": 0.01}],
    "compressors": [{"id": "C1", "from": "N1", "to": "N2", "alpha_max": 1.4, "eta": 0.1, "m": 1}]
  })");
}

}  // namespace

TEST_CASE("single pipe network parses with derived resistance") {
  const Network net = network_from_json(single_pipe_doc());
  CHECK(net.num_nodes() == 3);
  CHECK(net.pipes().size() == 1);
  CHECK(net.compressors().size() == 1);
  CHECK(net.nodes()[net.slack_index()].id == "N1");
  const double area = std::numbers::pi * 0.9 * 0.9 / 4.0;
  const double kappa = 377.0 * 377.0 * 0.01 * 20000.0 / (area * area * 0.9);
  CHECK(net.resistances()[0] == doctest::Approx(kappa).epsilon(1e-14));
  REQUIRE(net.nodes()[2].uncertainty.has_value());
  CHECK(net.nodes()[2].uncertainty->lo == -50.0);
  CHECK(net.uncertain_nodes() == std::vector<std::size_t>{2});
}

TEST_CASE("nodes and edges are ordered by id") {
  json doc = single_pipe_doc();
  std::swap(doc["nodes"][0], doc["nodes"][2]);
  const Network net = network_from_json(doc);
  CHECK(net.nodes()[0].id == "N1");
  CHECK(net.nodes()[2].id == "N3");
  CHECK(net.edges()[0].id == "P1");
  CHECK(net.edges()[1].id == "C1");
  CHECK(net.node_index("N2") == 1);
  CHECK(net.edge_index("C1") == 1);
  CHECK_FALSE(net.find_node("N9").has_value());
  CHECK_THROWS_AS(net.node_index("N9"), Error);
}

TEST_CASE("incidence has one +1 and one -1 per column") {
  const Network net = network_from_json(single_pipe_doc());
  const Eigen::MatrixXd a = Eigen::MatrixXd(incidence(net));
  REQUIRE(a.rows() == 3);
  REQUIRE(a.cols() == 2);
  CHECK(a(1, 0) == -1.0);
  CHECK(a(2, 0) == 1.0);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == -1.0);
  CHECK(a(1, 1) == 1.0);
  for (int c = 0; c < a.cols(); ++c) CHECK(a.col(c).sum() == 0.0);
}

TEST_CASE("incidence of an edgeless network is empty") {
  NetworkSpec spec;
  spec.wave_speed = 377.0;
  Node slack;
  slack.id = "S";
  slack.kind = NodeKind::Slack;
  slack.slack_pressure = 5e6;
  slack.pressure_min = 1e6;
  slack.pressure_max = 6e6;
  spec.nodes.push_back(slack);
  const Network net(spec);
  const auto a = incidence(net);
  CHECK(a.rows() == 1);
  CHECK(a.cols() == 0);
}

TEST_CASE("round trip through json is lossless") {
  const Network net = network_from_json(single_pipe_doc());
  const json out = network_to_json(net);
  const Network back = network_from_json(out);
  CHECK(network_to_json(back) == out);
  CHECK(back.resistances() == net.resistances());
  const Network again = parse_network(out.dump());
  CHECK(network_to_json(again) == out);
}

TEST_CASE("invalid networks are rejected with the offending entity") {
  auto expect_error = [](const json& doc, const std::string& entity) {
    try {
      network_from_json(doc);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == Error::Kind::Input);
      CHECK(e.module() == "network_model");
      CHECK(e.entity() == entity);
    }
  };
  SUBCASE("demand and supply both positive") {
    json doc = single_pipe_doc();
    doc["nodes"][2]["supply"] = 10.0;
    expect_error(doc, "node N3");
  }
  SUBCASE("no slack node") {
    json doc = single_pipe_doc();
    doc["nodes"][0]["kind"] = "flow";
    doc["nodes"][0].erase("slack_pressure");
    expect_error(doc, "network");
  }
  SUBCASE("two slack nodes") {
    json doc = single_pipe_doc();
    doc["nodes"][1]["kind"] = "slack";
    doc["nodes"][1]["slack_pressure"] = 5e6;
    CHECK_THROWS_AS(network_from_json(doc), Error);
  }
  SUBCASE("disconnected") {
    json doc = single_pipe_doc();
    doc["nodes"].push_back(json{{"id", "N4"}, {"kind", "flow"}, {"pressure_min", 1e6}, {"pressure_max", 6e6}});
    expect_error(doc, "node N4");
  }
  SUBCASE("unknown endpoint") {
    json doc = single_pipe_doc();
    doc["pipes"][0]["to"] = "N7";
    expect_error(doc, "pipe P1");
  }
  SUBCASE("inconsistent stated resistance") {
    json doc = single_pipe_doc();
    doc["pipes"][0]["resistance"] = 1.0;
    expect_error(doc, "pipe P1");
  }
  SUBCASE("negative length") {
    json doc = single_pipe_doc();
    doc["pipes"][0]["length"] = -1.0;
    expect_error(doc, "pipe P1");
  }
  SUBCASE("compressor ratio below one") {
    json doc = single_pipe_doc();
    doc["compressors"][0]["alpha_max"] = 0.9;
    expect_error(doc, "compressor C1");
  }
  SUBCASE("pressure window inverted") {
    json doc = single_pipe_doc();
    doc["nodes"][1]["pressure_min"] = 7e6;
    expect_error(doc, "node N2");
  }
  SUBCASE("unknown key") {
    json doc = single_pipe_doc();
    doc["pipes"][0]["colour"] = "red";
    CHECK_THROWS_AS(network_from_json(doc), Error);
  }
  SUBCASE("malformed text") {
    CHECK_THROWS_AS(parse_network("{not json"), Error);
  }
}

TEST_CASE("consistent stated resistance is accepted") {
  json doc = single_pipe_doc();
  const Network net = network_from_json(doc);
  doc["pipes"][0]["resistance"] = net.resistances()[0];
  CHECK_NOTHROW(network_from_json(doc));
}
