"""Delay-margin analysis for double-integrator consensus networks.

Agents exchange position/velocity information over an undirected graph with
a uniform communication delay on neighbor states only. The package computes
how much delay the network tolerates before consensus breaks, three ways
that must agree: a matrix Lambert W solution of the transcendental
characteristic equation, a quasipolynomial root scan, and direct simulation.
"""

from .errors import DelaytkError
from .graph import Graph, build_cycle, build_path, build_random, from_edge_list, load_edge_list
from .system import DelaySystem, SystemMatrices, assemble, char_residual
from .lambert_w import lambert_w_matrix, lambert_w_scalar, lambert_w_values
from .oracle import critical_delay_bisection, find_roots, rightmost_abscissa
from .solver import LambertSolution, build_solution, solve_Q
from .stability import (
    DelayMarginResult,
    StabilityVerdict,
    classify,
    eta_mu,
    margin_bisection,
    necessary_condition,
    reconstruct_roots,
    sweep_delay,
)
from .simulate import (
    HistorySpec,
    Trajectory,
    control_inputs,
    disagreement,
    energy,
    integrate,
    trajectory_summary,
    write_trajectory_csv,
)

__version__ = "0.1.0"

__all__ = [
    "DelaytkError",
    "Graph",
    "build_cycle",
    "build_path",
    "build_random",
    "from_edge_list",
    "load_edge_list",
    "DelaySystem",
    "SystemMatrices",
    "assemble",
    "char_residual",
    "lambert_w_matrix",
    "lambert_w_scalar",
    "lambert_w_values",
    "critical_delay_bisection",
    "find_roots",
    "rightmost_abscissa",
    "LambertSolution",
    "build_solution",
    "solve_Q",
    "DelayMarginResult",
    "StabilityVerdict",
    "classify",
    "eta_mu",
    "margin_bisection",
    "necessary_condition",
    "reconstruct_roots",
    "sweep_delay",
    "HistorySpec",
    "Trajectory",
    "control_inputs",
    "disagreement",
    "energy",
    "integrate",
    "trajectory_summary",
    "write_trajectory_csv",
    "__version__",
]
