"""Lambert W: scalar evaluation on every branch, and the matrix extension.

The scalar solver finds w with w e^w = z on a requested branch k using
Halley's iteration from branch-aware starting points:

* asymptotic seed  L - log(L)  with  L = log(z) + 2 pi i k  away from the
  origin and the branch point,
* the Taylor seed around 0 on the principal branch,
* the convergent series in p = sqrt(2 (e z + 1)) inside a small disc around
  the branch point z = -1/e, where branches 0 and -1 meet.

The matrix version W(H) = Z diag(W_{k_i}(h_i)) Z^{-1} requires H to be
diagonalizable with a decently conditioned eigenvector matrix; eigenvalues
equal to zero always take branch 0 (the only branch finite at the origin).
"""

from __future__ import annotations

import numpy as np

from .errors import NonConvergence, NotDiagonalizable, UndefinedAtZero

__all__ = [
    "lambert_w_scalar",
    "lambert_w_values",
    "lambert_w_matrix",
    "hybrid_branches",
    "BRANCH_POINT",
]

# z = -1/e, where the w-plane picture folds: W_0 and W_-1 coincide at w = -1.
BRANCH_POINT = -float(np.exp(-1.0))

# Radius around the branch point inside which the p-series is used verbatim;
# the truncation error there is ~1e-14, below the identity tolerance.
_SERIES_RADIUS = 1e-6

_HALLEY_MAX_ITER = 120


def _branch_point_series(z: np.ndarray, k: int) -> np.ndarray:
    """Series around z = -1/e.  p is the principal square root; the branch
    meeting W_0 at the fold (k = -1 above the cut, k = +1 below) takes -p."""
    p = np.sqrt(2.0 * (np.e * z + 1.0)).astype(complex)
    if k == -1:
        p = -p
    return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3


def _seed(z: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        # Two regions cover the principal basin: the p-series inside a disc
        # around the fold (the only seed that goes complex correctly on the
        # cut side), and the Iacono-Boyd form everywhere else.  The latter is
        # exact to O(z^2) near 0 and tends to log(z) - log(log(z)) far out;
        # its log1p singularities at z = 1/e - 1 and e^-2 - 1 sit inside the
        # fold disc, so the two regions overlap cleanly.
        w = np.empty_like(z, dtype=complex)
        near_bp = np.abs(z - BRANCH_POINT) <= 0.8
        w[near_bp] = _branch_point_series(z[near_bp], 0)
        zl = z[~near_bp].astype(complex)
        l1 = np.log1p(zl)
        w[~near_bp] = l1 * (1.0 - np.log1p(l1) / (2.0 + l1))
        return w
    # Every other branch is reached from the shifted logarithm; for k = -1
    # this single seed converges on the whole plane (including the real
    # window [-1/e, 0), where the imaginary part dies out in the iteration).
    big_l = np.log(z.astype(complex)) + 2j * np.pi * k
    return big_l - np.log(big_l)


def _halley(z: np.ndarray, w0: np.ndarray) -> np.ndarray:
    """Vectorized Halley iteration on w e^w = z from starting points w0.

    Convergence is judged on the defining residual |w e^w - z| (the quantity
    the caller is promised), with the step size as a secondary criterion;
    near the fold at -1/e the step can plateau at roundoff level while the
    residual is already far below tolerance.
    """
    w = w0.astype(complex).copy()
    active = np.ones(w.shape, dtype=bool)
    for _ in range(_HALLEY_MAX_ITER):
        wa = w[active]
        za = z[active]
        ew = np.exp(wa)
        f = wa * ew - za
        done = np.abs(f) <= 1e-14 * (1.0 + np.abs(za))
        wp1 = wa + 1.0
        # keep the update defined if an iterate grazes w = -1
        wp1 = np.where(np.abs(wp1) < 1e-14, wp1 + 1e-14, wp1)
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        dw = np.where(done, 0.0, f / denom)
        wa = wa - dw
        w[active] = wa
        done |= np.abs(dw) <= 1e-15 * (2.0 + np.abs(wa))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
    if active.any():
        # accept stragglers that still honor the contract tolerance
        wa = w[active]
        za = z[active]
        ok = np.abs(wa * np.exp(wa) - za) <= 1e-13 * (1.0 + np.abs(za))
        idx = np.flatnonzero(active)
        active[idx[ok]] = False
    if active.any():
        bad = z[active].ravel()[0]
        raise NonConvergence(f"Lambert W iteration stalled, e.g. at z={bad}")
    return w


def lambert_w_values(z, k: int = 0) -> np.ndarray:
    """Vectorized W_k over an array of complex arguments.

    Raises UndefinedAtZero if k != 0 and any entry is exactly 0.
    """
    z = np.asarray(z, dtype=complex)
    scalar_shape = z.shape
    z = np.atleast_1d(z)
    out = np.empty(z.shape, dtype=complex)

    zero = z == 0
    if zero.any():
        if k != 0:
            raise UndefinedAtZero(f"W_{k}(0) is undefined")
        out[zero] = 0.0

    # The fold at -1/e joins branch 0 to branch -1 in the closed upper half
    # plane and to branch +1 strictly below the axis (conjugation symmetry
    # W_1(z) = conj(W_-1(conj z))); outside those sectors the neighboring
    # branch value is regular there and the iteration handles it.
    near = ~zero & (np.abs(z - BRANCH_POINT) <= _SERIES_RADIUS)
    if k == 0:
        series = near
    elif k == -1:
        series = near & (z.imag >= 0)
    elif k == 1:
        series = near & (z.imag < 0)
    else:
        series = np.zeros(z.shape, dtype=bool)
    if series.any():
        out[series] = _branch_point_series(z[series], -1 if k else 0)

    todo = ~zero & ~series
    if todo.any():
        out[todo] = _halley(z[todo], _seed(z[todo], k))
    return out.reshape(scalar_shape)


def lambert_w_scalar(k: int, z) -> complex:
    """W on branch k at a single point z; w e^w = z holds to
    1e-13 * (1 + |z|) on return."""
    return complex(lambert_w_values(np.asarray(z, dtype=complex), int(k)))


def hybrid_branches(eigvals, k: int = 0, zero_tol: float | None = None) -> np.ndarray:
    """Branch assignment mapping eigenvalue positions to branch indices.

    Positions whose eigenvalue is (numerically) zero get branch 0, the only
    branch finite at the origin; every other position gets ``k``.
    """
    vals = np.asarray(eigvals, dtype=complex)
    if zero_tol is None:
        zero_tol = 1e-9 * (1.0 + float(np.max(np.abs(vals))) if vals.size else 1.0)
    ks = np.full(vals.shape, int(k), dtype=int)
    ks[np.abs(vals) <= zero_tol] = 0
    return ks


def lambert_w_matrix(
    h,
    branches: int | np.ndarray = 0,
    cond_ceiling: float = 1e8,
) -> np.ndarray:
    """Matrix Lambert W via eigendecomposition.

    Parameters
    ----------
    h : (m, m) array_like
        Matrix argument. Must be diagonalizable; the eigenvector matrix
        condition number is checked against ``cond_ceiling``.
    branches : int or sequence of int
        A single branch index applies the hybrid rule (branch 0 on zero
        eigenvalues, the given branch elsewhere). A sequence assigns one
        branch per eigenvalue position, in the order numpy.linalg.eig
        returns them; zero eigenvalues must be assigned branch 0.

    Returns
    -------
    (m, m) complex ndarray W with W e^W = h.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotDiagonalizable(f"need a square matrix, got shape {h.shape}")

    diag = np.diag(np.diagonal(h))
    if np.count_nonzero(h - diag) == 0:
        # exactly diagonal input: same scalar code path, entry by entry
        vals = np.diagonal(h)
        ks = _resolve_branches(vals, branches)
        w = np.zeros_like(h)
        for i, (v, k) in enumerate(zip(vals, ks)):
            w[i, i] = lambert_w_scalar(int(k), v)
        return w

    vals, vecs = np.linalg.eig(h)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > cond_ceiling:
        raise NotDiagonalizable(
            f"eigenvector condition number {cond:.3e} exceeds {cond_ceiling:.1e}"
        )
    ks = _resolve_branches(vals, branches)
    wvals = np.empty_like(vals)
    for k in np.unique(ks):
        mask = ks == k
        wvals[mask] = lambert_w_values(vals[mask], int(k))
    return (vecs * wvals) @ np.linalg.inv(vecs)


def _resolve_branches(vals: np.ndarray, branches) -> np.ndarray:
    scale = 1.0 + (float(np.max(np.abs(vals))) if vals.size else 0.0)
    zero = np.abs(vals) <= 1e-9 * scale
    if np.isscalar(branches) or isinstance(branches, (int, np.integer)):
        ks = np.full(vals.shape, int(branches), dtype=int)
        ks[zero] = 0
        return ks
    ks = np.asarray(branches, dtype=int)
    if ks.shape != vals.shape:
        raise UndefinedAtZero(
            f"branch assignment length {ks.shape} != eigenvalue count {vals.shape}"
        )
    if np.any(ks[zero] != 0):
        raise UndefinedAtZero("zero eigenvalues must take branch 0")
    return ks
