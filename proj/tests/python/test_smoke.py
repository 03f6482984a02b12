import json
import math
import os
from pathlib import Path

import pytest

import gasflow

CONFIGS = Path(os.environ.get("GASFLOW_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


@pytest.fixture(scope="module")
def single_pipe():
    return gasflow.load_network(CONFIGS / "single_pipe.json")


def test_network_metadata(single_pipe):
    assert single_pipe.node_ids == ["N1", "N2", "N3"]
    assert single_pipe.edge_ids == ["P1", "C1"]
    assert single_pipe.slack == "N1"
    assert single_pipe.uncertain_nodes == ["N3"]


def test_steady_single_pipe(single_pipe):
    state = gasflow.steady(single_pipe, [1.2], [0.0, 0.0, 250.0])
    assert state["flows"]["P1"] == pytest.approx(250.0)
    assert state["pressures"]["N2"] == pytest.approx(math.sqrt(1.2) * 4.3367e6)
    assert state["pressures"]["N3"] < state["pressures"]["N2"]


def test_chance_constrained_solve(single_pipe):
    sol = gasflow.optimize(single_pipe, cells=12, gamma=1000.0)
    assert sol.status == "Optimal"
    assert 1.0 < sol.alpha[0] <= 1.4
    doc = gasflow.solution_dict(sol)
    assert len(doc["cells"]) == 12
    assert doc["chance"][0]["sfv_expectation"] <= 0.05 * (1 + 1e-6)
    est = gasflow.violation(sol, samples=500, seed=3)
    assert est[0]["node"] == "N3"
    assert 0.0 <= est[0]["violation_fraction"] <= 1.0
    dist = sol.distribution("pressure@N3", samples=2000)
    assert len(dist["values"]) == 12
    assert sum(dist["mass"]) == pytest.approx(1.0)


def test_deterministic_kkt_report():
    net = gasflow.load_network(CONFIGS / "eight_node.json")
    sol = gasflow.optimize(net, gamma=100.0, deterministic=True)
    report = gasflow.kkt_report(sol)
    assert report["pass"]
    assert report["nodes"][0]["node"] == "J3"
    with pytest.raises(gasflow.GasflowError):
        sol.distribution("pressure@J5")


def test_errors_are_translated(tmp_path):
    with pytest.raises(gasflow.GasflowError, match="network_model"):
        gasflow.Network.from_json(json.dumps({"nodes": [], "pipes": [], "compressors": []}))
    with pytest.raises(gasflow.GasflowError):
        gasflow.run("optimise", str(CONFIGS / "single_pipe.json"), str(tmp_path))


def test_run_writes_artifacts(tmp_path):
    code, summary, artifacts = gasflow.run(
        "validate", str(CONFIGS / "single_pipe.json"), str(tmp_path), cells=12, gamma=1000.0, mc_samples=300
    )
    assert code == 0
    assert summary.startswith("status=Optimal")
    names = {Path(a).name for a in artifacts}
    assert {"solution.json", "kkt_report.json", "violation_report.json"} <= names
