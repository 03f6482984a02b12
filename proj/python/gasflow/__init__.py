"""Chance-constrained optimal gas flow with stochastic finite volumes."""

import json

from ._core import GasflowError, Network, Solution
from ._core import optimize as _optimize
from ._core import run
from ._core import steady as _steady

__all__ = [
    "GasflowError",
    "Network",
    "Solution",
    "load_network",
    "optimize",
    "run",
    "steady",
    "solution_dict",
    "kkt_report",
    "violation",
]

__version__ = "0.1.0"


def load_network(path):
    """Reads a network description from a JSON file."""
    return Network.from_file(str(path))


def steady(network, alpha, withdrawal):
    """Steady state for fixed compressor ratios and nodal withdrawals (kg/s)."""
    return json.loads(_steady(network, list(alpha), list(withdrawal)))


def optimize(network, cells=50, gamma=1.0, delta=1e-3, deterministic=False, shared_nominations=False):
    """Solves the optimal gas flow problem and returns a Solution handle."""
    return _optimize(network, cells, gamma, delta, deterministic, shared_nominations)


def solution_dict(solution):
    return json.loads(solution.to_json())


def kkt_report(solution, tolerance=1e-5):
    return json.loads(solution.kkt_report(tolerance))


def violation(solution, samples=10000, seed=7, threads=1):
    return json.loads(solution.violation(samples, seed, threads))["chance"]
