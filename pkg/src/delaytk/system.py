"""State-space assembly for delayed double-integrator consensus.

Each agent runs x_i' = v_i, v_i' = u_i with the protocol

    u_i = -sum_{j in N(i)} [ (x_i(t) - x_j(t - tau))
                             + gamma * (v_i(t) - v_j(t - tau)) ]

i.e. an agent uses its own state instantly but its neighbors' states with a
communication delay tau. Stacking Gamma = (x, v) gives

    Gamma'(t) = T Gamma(t) + T_d Gamma(t - tau)

with T = [[0, I], [-D, -gamma D]] and T_d = [[0, 0], [A, gamma A]].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ZeroGamma
from .graph import Graph, adjacency_degree

__all__ = [
    "SystemMatrices",
    "DelaySystem",
    "assemble",
    "char_residual",
    "residual_scale",
]


@dataclass(frozen=True)
class SystemMatrices:
    """Assembled consensus system.

    T and T_d are (2n, 2n) float arrays; ``n`` is the agent count and
    ``gamma`` the velocity coupling weight. Instances are immutable and safe
    to share across threads.
    """

    n: int
    gamma: float
    T: np.ndarray
    T_d: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * self.n


@dataclass(frozen=True)
class DelaySystem:
    """A bare retarded linear system Gamma' = T Gamma + T_d Gamma(t - tau).

    Used where the root-scanning machinery is needed without any consensus
    structure (benchmarks, cross-checks). The oracle functions accept either
    this or :class:`SystemMatrices`.
    """

    T: np.ndarray
    T_d: np.ndarray

    @property
    def dim(self) -> int:
        return self.T.shape[0]


def assemble(g: Graph, gamma: float) -> SystemMatrices:
    """Build (T, T_d) for graph g and coupling gamma.

    Raises ZeroGamma for gamma == 0 and InvalidInput for non-finite gamma.
    """
    gamma = float(gamma)
    if not math.isfinite(gamma):
        raise InvalidInput(f"gamma must be finite, got {gamma!r}")
    if gamma == 0.0:
        raise ZeroGamma("gamma = 0 removes velocity coupling; not supported")
    a, d = adjacency_degree(g)
    n = g.n
    a = a.astype(float)
    d = d.astype(float)
    zeros = np.zeros((n, n))
    eye = np.eye(n)
    t = np.block([[zeros, eye], [-d, -gamma * d]])
    t_d = np.block([[zeros, zeros], [a, gamma * a]])
    return SystemMatrices(n=n, gamma=gamma, T=t, T_d=t_d)


def residual_scale(s: complex, dim: int) -> float:
    """Scale factor (1 + |s|)^dim against which determinant residuals are
    judged; det(sI - ...) itself grows at this rate."""
    return float((1.0 + abs(s)) ** dim)


def char_residual(s: complex, sys: SystemMatrices | DelaySystem, tau: float) -> complex:
    """Characteristic determinant det(sI - T - T_d e^(-s tau)).

    Zero exactly at the characteristic roots of the delayed system. The
    consensus structure pins a root at s = 0 for every tau (the agreement
    subspace), which callers treat as known.
    """
    t = np.asarray(sys.T, dtype=complex)
    t_d = np.asarray(sys.T_d, dtype=complex)
    dim = t.shape[0]
    x = s * np.eye(dim) - t - t_d * np.exp(-s * tau)
    return complex(np.linalg.det(x))
