"""Gated lattice walkers, their exact absorption constant and a continuum reference solver."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .alpha import alpha_exact, alpha_table, monotonicity_scan
from .bridge import ContinuumParams, homogenized_K, map_params, measure_K, predict_K_heuristic
from .schedule import GateSchedule, gate_is_open
from .walkers import LatticeParams, StopRule, run

__all__ = [
    "ContinuumParams",
    "GateSchedule",
    "LatticeParams",
    "StopRule",
    "alpha_exact",
    "alpha_table",
    "gate_is_open",
    "homogenized_K",
    "map_params",
    "measure_K",
    "monotonicity_scan",
    "predict_K_heuristic",
    "run",
]
