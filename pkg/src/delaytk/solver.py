"""Newton solution of the delayed-system matrix fixed point.

A solution of

    W(M) e^{W(M) + tau T} = tau T_d,    M = tau T_d Q,

gives S = (1/tau) W(M) + T whose eigenvalues are characteristic roots of
the delay system.  Both M and W(M) have zero upper blocks (T_d does), so
either is determined by its two lower n x n blocks.

The Newton iteration runs over the lower blocks of V = W(M) rather than
of M itself: in those variables the equation V e^{V + tau T} = tau T_d
is entire, whereas the map M -> W(M) has a square-root singularity
whenever an eigenvalue of M22 crosses -1/e (the fold where the principal
and secondary real branches meet, which happens along delay sweeps).
The branch choice enters through the starting point, by evaluating the
hybrid W_k(M0) of the supplied M0 = tau T_d Q0, and through the labeling
of the converged solution; the fixed points themselves are branch
solutions of the same smooth equation.

W(M) is evaluated blockwise where needed: M's spectrum is the n
structural zeros plus eig(M22), and

    W(M) = [[0, 0], [g(M22) M21, W(M22)]],   g(z) = W(z)/z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    InsufficientRoots,
    NonConvergence,
    NotDiagonalizable,
    SingularM22,
)
from .lambert_w import lambert_w_values

__all__ = [
    "LambertSolution",
    "MasterEquation",
    "NewtonState",
    "initial_guess_Q",
    "bootstrap_spectrum",
    "solve_Q",
    "build_solution",
    "branch_sweep",
    "secondary_start",
]

_COND_CEILING = 1e10
_REAL_SNAP = 1e-8  # |Im m| below this (relative) counts as a real eigenvalue


def _split_sys(sys):
    t = np.asarray(sys.T, dtype=float)
    td = np.asarray(sys.T_d, dtype=float)
    dim = t.shape[0]
    if dim % 2 != 0:
        raise SingularM22(f"block structure needs even dimension, got {dim}")
    return t, td, dim // 2


def _branch_k(vals, branch):
    """Snap near-real eigenvalues onto the axis and assign branches.

    Only real negative eigenvalues can take the secondary real branch; the
    principal branch keeps complex pairs conjugate-symmetric, so W stays
    real for real M.
    """
    vals = np.asarray(vals, dtype=complex).copy()
    scale = 1.0 + np.max(np.abs(vals)) if vals.size else 1.0
    realish = np.abs(vals.imag) <= _REAL_SNAP * scale
    vals[realish] = vals[realish].real
    ks = np.zeros(vals.shape, dtype=int)
    if branch != 0:
        ks[realish & (vals.real < 0)] = branch
    return vals, ks


def _w_values_for(vals, ks):
    out = np.empty(vals.shape, dtype=complex)
    for k in np.unique(ks):
        m = ks == k
        out[m] = lambert_w_values(vals[m], int(k))
    return out


class MasterEquation:
    """Residual of the branch-k matrix equation at fixed (system, tau)."""

    def __init__(self, sys, tau: float, branch: int = 0):
        t, td, n = _split_sys(sys)
        self.t = t
        self.td = td
        self.n = n
        self.dim = 2 * n
        self.tau = float(tau)
        self.branch = int(branch)
        self.taut = self.tau * t
        self.tautd = self.tau * td
        self.scale = 1.0 + float(np.linalg.norm(td))

    # -- blockwise W(M) -------------------------------------------------

    def w_blocks(self, m21, m22):
        """(B21, B22) with W(M) = [[0,0],[B21,B22]]; None if eig is unusable."""
        try:
            vals, vecs = np.linalg.eig(m22)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(vals)):
            return None
        cond = np.linalg.cond(vecs)
        if not np.isfinite(cond) or cond > _COND_CEILING:
            return None
        vals, ks = _branch_k(vals, self.branch)
        w = _w_values_for(vals, ks)
        # g(z) = W(z)/z, extended through z = 0 on the principal branch
        tiny = (np.abs(vals) < 1e-8) & (ks == 0)
        safe = np.where(tiny, 1.0, vals)
        g = w / safe
        g[tiny] = 1.0 - vals[tiny] + 1.5 * vals[tiny] ** 2
        if not np.all(np.isfinite(g)):
            return None
        try:
            vinv = np.linalg.inv(vecs)
        except np.linalg.LinAlgError:
            return None
        b22 = (vecs * w) @ vinv
        b21 = ((vecs * g) @ vinv) @ m21
        return b21, b22

    def residual(self, m21, m22):
        """Lower n rows of W(M) e^{W(M)+tau T} - tau T_d (complex), or None."""
        blocks = self.w_blocks(m21, m22)
        if blocks is None:
            return None
        return self.residual_w(*blocks)

    def residual_w(self, b21, b22):
        """Same residual with the lower blocks of W given directly."""
        w = np.zeros((self.dim, self.dim), dtype=np.result_type(b21, b22, float))
        w[self.n :, : self.n] = b21
        w[self.n :, self.n :] = b22
        # wild line-search trial points can overflow the exponential; a
        # non-finite result is reported as None and the step is rejected
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                e = expm(w + self.taut)
            except (ValueError, np.linalg.LinAlgError):
                return None
            r = (w @ e - self.tautd)[self.n :, :]
        if not np.all(np.isfinite(r)):
            return None
        return r

    # -- flat real views for the Newton iteration -----------------------
    # the unknowns are the real lower blocks (B21, B22) of W

    def pack(self, b21, b22):
        return np.concatenate([np.ravel(b21).real, np.ravel(b22).real])

    def unpack(self, x):
        n = self.n
        b21 = x[: n * n].reshape(n, n)
        b22 = x[n * n :].reshape(n, n)
        return b21, b22

    def residual_flat(self, x):
        r = self.residual_w(*self.unpack(x))
        if r is None:
            return None
        return np.asarray(r, dtype=float).ravel()

    def start_from_M(self, m21, m22):
        """Packed starting point: hybrid branch-k W of the given M blocks.

        Real negative eigenvalues just past the fold (below -1/e, where no
        real preimage exists) are clipped onto it, so warm starts carried
        across the fold stay real and land next to the solution sheet.
        """
        blocks = self.w_blocks(m21, m22)
        if blocks is None:
            raise NotDiagonalizable(
                "starting M has no usable eigendecomposition"
            )
        b21, b22 = blocks
        return self.pack(np.real(b21), np.real(b22))


@dataclass
class NewtonState:
    """Converged unknowns plus the last Jacobian, reusable for warm starts."""

    x: np.ndarray
    jacobian: np.ndarray | None
    iterations: int
    residual_norm: float


def _fd_jacobian(eq: MasterEquation, x, r0):
    m = x.size
    jac = np.empty((r0.size, m))
    for j in range(m):
        h = 1e-7 * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += h
        rp = eq.residual_flat(xp)
        if rp is None:
            # one-sided the other way; a dead direction means a dead column
            xp[j] = x[j] - h
            rm = eq.residual_flat(xp)
            jac[:, j] = 0.0 if rm is None else (r0 - rm) / h
        else:
            jac[:, j] = (rp - r0) / h
    return jac


def _lm_step(eq: MasterEquation, jac, x, r, nr):
    """One Levenberg-Marquardt rescue when the plain step cannot descend.

    Sweeps the damping upward until some trial point reduces the residual;
    returns (x, r, nr, True) on success.
    """
    jtj = jac.T @ jac
    jtr = jac.T @ r
    ridge = float(np.max(np.diag(jtj))) or 1.0
    for lam in (1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4):
        try:
            step = np.linalg.solve(jtj + lam * ridge * np.eye(x.size), -jtr)
        except np.linalg.LinAlgError:
            continue
        xn = x + step
        rn = eq.residual_flat(xn)
        if rn is None:
            continue
        nn = float(np.linalg.norm(rn))
        if nn < nr:
            return xn, rn, nn, True
    return x, r, nr, False


def _polish(eq: MasterEquation, x, r, nr, jac):
    """Full Newton steps past the acceptance tolerance; stalling is fine.

    Eigenvalues of the reconstructed S inherit the W error divided by tau,
    so at small delays the master residual has to sit far below the
    acceptance tolerance for eig(S) to stay inside the determinant budget.
    Descent is strictly monotone and the best state is kept; one fresh
    Jacobian rebuild is allowed when the carried secant stops contracting.
    """
    floor = eq.scale * max(2e-13, 1e-10 * min(1.0, eq.tau / 0.4))
    rebuilt = False
    for _ in range(8):
        if nr <= floor:
            break
        if jac is None:
            jac = _fd_jacobian(eq, x, r)
            rebuilt = True
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        rn = eq.residual_flat(x + step)
        nn = float(np.linalg.norm(rn)) if rn is not None else np.inf
        if nn >= nr:
            if rebuilt:
                break
            jac = None
            continue
        contraction = nn / max(nr, 1e-300)
        x, r, nr = x + step, rn, nn
        if contraction > 0.5:
            if rebuilt:
                break
            jac = None
    return x, nr, jac


def _newton(eq: MasterEquation, x0, tol, max_iter=200, jacobian=None):
    """Damped Gauss-Newton on the flattened residual.

    Reuses a supplied Jacobian while it keeps making progress; rebuilds it
    by finite differences whenever the line search stalls, and escalates to
    Levenberg-Marquardt damping when even a fresh Jacobian cannot descend
    (near-singular Jacobians occur where carried root pairs collide).
    Accepted states are polished a few extra steps toward the rounding
    floor before they are returned (see _polish).
    """
    x = np.asarray(x0, dtype=float).copy()
    r = eq.residual_flat(x)
    if r is None:
        raise NonConvergence("residual undefined at the starting point")
    nr = float(np.linalg.norm(r))
    jac = jacobian
    fresh = False
    for it in range(max_iter):
        if nr <= tol:
            x, nr, jac = _polish(eq, x, r, nr, jac)
            return NewtonState(x, jac, it, nr)
        if jac is None:
            jac = _fd_jacobian(eq, x, r)
            fresh = True
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        alpha = 1.0
        moved = False
        while alpha >= 1.0 / 1024:
            xn = x + alpha * step
            rn = eq.residual_flat(xn)
            if rn is not None:
                nn = float(np.linalg.norm(rn))
                if nn < nr * (1.0 - 1e-4 * alpha) or nn <= tol:
                    x, r, nr = xn, rn, nn
                    moved = True
                    break
            alpha /= 2.0
        if not moved:
            if fresh:
                x, r, nr, moved = _lm_step(eq, jac, x, r, nr)
                if not moved:
                    raise NonConvergence(
                        f"line search stalled at residual {nr:.3e} "
                        f"(tol {tol:.3e})"
                    )
                jac = None  # the rescue moved; refresh the local model
                fresh = False
                continue
            jac = None  # stale secant direction; rebuild and retry
            fresh = False
            continue
        if alpha < 0.25:
            jac = None  # struggled; a fresh Jacobian is cheaper than thrashing
            fresh = False
    if nr <= tol:
        x, nr, jac = _polish(eq, x, r, nr, jac)
        return NewtonState(x, jac, max_iter, nr)
    raise NonConvergence(
        f"no convergence in {max_iter} iterations; residual {nr:.3e}"
    )


# -- bootstrap ---------------------------------------------------------


def _select_rightmost(spectrum, count):
    """Conjugate-closed multiset of the `count` rightmost roots.

    Roots come as upper-half representatives with multiplicities; complex
    entries occupy two slots (the pair).  A pair that does not fit in the
    last remaining slot is skipped in favor of the next real root.
    """
    ordered = sorted(
        zip(spectrum.roots, spectrum.multiplicities),
        key=lambda rm: (-rm[0].real, -abs(rm[0].imag)),
    )
    chosen = []
    slots = count
    queue = []
    for s, m in ordered:
        queue.extend([s] * m)
    i = 0
    skipped_pairs = []
    while slots > 0 and i < len(queue):
        s = queue[i]
        if s.imag > 0:
            if slots >= 2:
                chosen.append(s)
                slots -= 2
            else:
                # a lone slot cannot hold a conjugate pair; look deeper
                skipped_pairs.append(s)
        else:
            chosen.append(complex(s.real, 0.0))
            slots -= 1
        i += 1
    if slots == 1:
        # parity repair: swap the deepest chosen real for the best unused
        # pair (real roots below the reach of the scan may simply not exist)
        skipped_pairs.extend(s for s in queue[i:] if s.imag > 0)
        real_positions = [j for j, s in enumerate(chosen) if s.imag == 0]
        if skipped_pairs and real_positions:
            chosen.pop(real_positions[-1])
            chosen.append(skipped_pairs[0])
            slots = 0
    if slots > 0:
        raise InsufficientRoots(
            f"need {count} roots (conjugate-closed) but the spectrum "
            f"provides only {spectrum.count_with_conjugates()}"
        )
    return chosen


def _mixing_basis(dim: int) -> np.ndarray:
    # fixed seed: the bootstrap must be reproducible run to run
    rng = np.random.default_rng(1729 + dim)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def initial_guess_Q(sys, tau: float, spectrum) -> np.ndarray:
    """Bootstrap Q from characteristic roots located by the direct scan.

    Builds a real matrix S0 carrying the 2n rightmost roots (1x1 blocks for
    real roots, 2x2 rotation-scale blocks for conjugate pairs), mixed by a
    fixed orthogonal basis, then solves tau T_d Q0 = tau(S0-T) e^{(S0-T)tau}
    in the least-squares sense.
    """
    t, td, n = _split_sys(sys)
    dim = 2 * n
    roots = _select_rightmost(spectrum, dim)
    blocks = []
    for s in roots:
        if s.imag > 0:
            blocks.append(np.array([[s.real, s.imag], [-s.imag, s.real]]))
        else:
            blocks.append(np.array([[s.real]]))
    s0 = np.zeros((dim, dim))
    at = 0
    for b in blocks:
        k = b.shape[0]
        s0[at : at + k, at : at + k] = b
        at += k
    basis = _mixing_basis(dim)
    s0 = basis @ s0 @ basis.T
    w0 = tau * (s0 - t)
    m0 = w0 @ expm(w0)
    q0, *_ = np.linalg.lstsq(tau * td, m0, rcond=None)
    return q0


def bootstrap_spectrum(sys, tau: float, re_min: float = -2.0):
    """Root scan deep enough to stock the bootstrap with 2n roots.

    Deep regions can hold near-collision clusters the default grid walks
    straight past, so a winding mismatch retries the scan on a finer grid
    before giving up.
    """
    from .oracle import GridTooCoarse, SearchRegion, default_region, find_roots

    t, td, n = _split_sys(sys)
    depth = re_min
    while True:
        region = default_region(sys, tau, re_min=depth)
        spectrum = None
        for shrink in (1.0, 0.5, 0.25):
            try:
                spectrum = find_roots(
                    sys, tau,
                    SearchRegion(region.re_min, region.re_max, region.im_max,
                                 region.grid_step * shrink),
                )
                break
            except GridTooCoarse:
                continue
        if spectrum is None:
            raise GridTooCoarse(
                f"root scan for the bootstrap failed down to grid_step "
                f"{region.grid_step * 0.25:.3g} at depth {depth}"
            )
        if spectrum.count_with_conjugates() >= 2 * n:
            return spectrum
        if depth <= -64.0:
            raise InsufficientRoots(
                f"only {spectrum.count_with_conjugates()} roots right of "
                f"Re(s) = {depth}; cannot seed a {2 * n}-root bootstrap"
            )
        depth *= 2.0


# -- spec-level operations ---------------------------------------------


def _achieved_branch(b22) -> int:
    """Label a converged solution by where its real W eigenvalues live.

    Real eigenvalues of B22 below -1 sit on the secondary real sheet
    (W_{-1} of the matching m); all at or above -1 is the principal label.
    """
    vals = np.linalg.eigvals(np.asarray(b22))
    scale = 1.0 + float(np.max(np.abs(vals))) if vals.size else 1.0
    real = np.abs(vals.imag) <= _REAL_SNAP * scale
    return -1 if bool(np.any(vals.real[real] < -1.0 - 1e-9)) else 0


def _solve_w(sys, tau, x0, branch=0, max_iter=200, jacobian=None):
    eq = MasterEquation(sys, tau, branch)
    return eq, _newton(eq, x0, tol=1e-10 * eq.scale, max_iter=max_iter,
                       jacobian=jacobian)


def solve_Q(sys, tau: float, q0, branch: int = 0, max_iter: int = 200):
    """Newton-refine Q until ||W(M)e^{W(M)+tau T} - tau T_d|| is tiny.

    The iteration runs over the lower blocks of W; the branch choice fixes
    the starting point W_k(tau T_d Q0).  The returned Q is q0 plus the
    minimum-norm correction, so an exact fixed point comes back unchanged.
    """
    t, td, n = _split_sys(sys)
    eq = MasterEquation(sys, tau, branch)
    q0 = np.asarray(q0, dtype=float)
    m_start = eq.tautd @ q0
    x0 = eq.start_from_M(m_start[n:, : n], m_start[n:, n:])
    state = _newton(eq, x0, tol=1e-10 * eq.scale, max_iter=max_iter)
    if state.iterations == 0:
        return q0
    b21, b22 = eq.unpack(state.x)
    w = np.zeros((2 * n, 2 * n))
    w[n:, : n] = b21
    w[n:, n:] = b22
    m_fix = w @ expm(w)
    delta = m_fix - m_start
    if np.linalg.norm(delta) <= 1e-14 * (1.0 + np.linalg.norm(m_start)):
        return q0
    correction, *_ = np.linalg.lstsq(eq.tautd, delta, rcond=None)
    return q0 + correction


@dataclass(frozen=True)
class LambertSolution:
    """One converged branch solution with its block anatomy.

    W21 is the barred matrix of the spectral test (= -1 times the literal
    lower-left block of W(M), which w21_block carries); both appear because
    the block identities and the eigenvalue shifts use opposite signs.
    """

    tau: float
    branch: int
    Q: np.ndarray
    M: np.ndarray
    eigvals_M: np.ndarray
    Z_blocks: tuple
    W_of_M: np.ndarray
    W22: np.ndarray
    W21: np.ndarray
    w21_block: np.ndarray
    S: np.ndarray
    residual_fixed_point: float
    master_residual: float
    ordering: str
    ambiguous: bool
    upper_rows_norm: float
    checks: tuple = ()

    @property
    def n(self) -> int:
        return self.M.shape[0] // 2


def _fixed_point_residual(s, t, td, tau):
    r = s - t - td @ expm(-s * tau)
    return float(np.linalg.norm(r)) / (1.0 + float(np.linalg.norm(t)) + float(np.linalg.norm(td)))


def _structure_checks(t, tau, w_of_m, w_bar, w22, z3, upper_norm, spectral_ok):
    """Block-identity scorecard for a converged solution.

    Graphs whose degree and adjacency matrices commute (regular ones)
    satisfy every identity to rounding; irregular graphs degrade the
    symmetric structure by O(tau^2) and the failures flag the solution
    rather than reject it.
    """
    n = t.shape[0] // 2
    d_mat = -t[n:, :n]
    gd_mat = -t[n:, n:]
    w21m = np.asarray(w_bar)
    w22m = np.asarray(w22)
    n21 = float(np.linalg.norm(w21m))
    n22 = float(np.linalg.norm(w22m))

    def comm(a, b):
        return float(np.linalg.norm(a @ b - b @ a))

    shift_a = w21m - tau * d_mat
    shift_b = w22m - tau * gd_mat
    return (
        ("upper_rows_zero",
         float(upper_norm) <= 1e-9 * (1.0 + float(np.linalg.norm(np.asarray(w_of_m))))),
        ("w21_symmetric",
         float(np.linalg.norm(w21m - w21m.T)) <= 1e-7 * (1.0 + n21)),
        ("w22_symmetric",
         float(np.linalg.norm(w22m - w22m.T)) <= 1e-7 * (1.0 + n22)),
        ("blocks_commute", comm(w21m, w22m) <= 1e-7 * (1.0 + n21 * n22)),
        ("shifted_blocks_commute",
         comm(shift_a, shift_b) <= 1e-7
         * (1.0 + float(np.linalg.norm(shift_a)) * float(np.linalg.norm(shift_b)))),
        ("z3_zero",
         (not spectral_ok)
         or float(np.linalg.norm(z3)) <= 1e-6 * (1.0 + np.sqrt(z3.size))),
    )


def build_solution(sys, tau: float, q, branch: int = 0,
                   w_blocks=None) -> LambertSolution:
    """Assemble the full eigendecomposition picture at a converged Q.

    W(M) is reconstructed from the branch-k hybrid map unless the solver's
    converged lower blocks are passed in `w_blocks` (preferred: exact, and
    immune to the fold ill-conditioning of the eigenvalue map near -1/e).
    Eigenvector columns are ordered structural zeros first, then by
    descending Re(W(m_i)); the Z quadrants are read off that ordering.
    Both candidate block products Z2 Z1^{-1} and Z1 Z2^{-1} are tried for
    the barred matrix and the one with the smaller fixed-point residual
    wins; agreement within a factor of 10 flags the solution ambiguous,
    as does any failed block-identity check (see `checks`), which is the
    normal state of affairs on irregular graphs where the symmetric
    structure only holds to O(tau^2).
    """
    t, td, n = _split_sys(sys)
    dim = 2 * n
    q = np.asarray(q, dtype=float)
    m = tau * td @ q

    m22 = m[n:, n:]
    ev22 = np.linalg.eigvals(m22)
    if np.min(np.abs(ev22)) <= 1e-12 * (1.0 + np.max(np.abs(ev22))):
        raise SingularM22(
            f"M22 numerically singular (|eig| down to {np.min(np.abs(ev22)):.2e})"
        )

    vals, vecs = np.linalg.eig(m)
    cond = np.linalg.cond(vecs)
    spectral_ok = bool(np.isfinite(cond) and cond <= _COND_CEILING)
    if not spectral_ok and w_blocks is None:
        raise NotDiagonalizable(
            f"eigenvector matrix of M has condition {cond:.2e}"
        )
    scale = 1.0 + float(np.max(np.abs(vals)))
    zero = np.abs(vals) <= 1e-9 * scale
    if int(np.sum(zero)) != n:
        if w_blocks is None:
            raise NotDiagonalizable(
                f"expected {n} structural zero eigenvalues of M, "
                f"found {int(np.sum(zero))}"
            )
        # eigenvalue collision smeared the structural zeros; with exact
        # blocks in hand the ordering is cosmetic, so take the n smallest
        spectral_ok = False
        zero = np.zeros(dim, dtype=bool)
        zero[np.argsort(np.abs(vals))[:n]] = True

    snapped, ks = _branch_k(vals, branch)
    ks[zero] = 0
    wvals = np.where(zero, 0.0, _w_values_for(snapped, ks))

    zero_idx = np.flatnonzero(zero)
    rest = np.flatnonzero(~zero)
    rest = rest[np.lexsort((-wvals[rest].imag, -wvals[rest].real))]
    order = np.concatenate([zero_idx, rest])

    vals = snapped[order]
    wvals = wvals[order]
    vecs = vecs[:, order]

    if w_blocks is not None:
        b21 = np.asarray(w_blocks[0], dtype=float)
        b22 = np.asarray(w_blocks[1], dtype=float)
        w_of_m = np.zeros((dim, dim))
        w_of_m[n:, : n] = b21
        w_of_m[n:, n:] = b22
    else:
        w_of_m = (vecs * wvals) @ np.linalg.inv(vecs)
        if np.linalg.norm(w_of_m.imag) <= 1e-9 * (1.0 + np.linalg.norm(w_of_m.real)):
            w_of_m = w_of_m.real.astype(float)
        b21 = w_of_m[n:, : n]
        b22 = w_of_m[n:, n:]

    upper_norm = float(np.linalg.norm(w_of_m[:n, :]))

    z1 = vecs[:n, :n]
    z2 = vecs[n:, :n]
    z3 = vecs[:n, n:]
    z4 = vecs[n:, n:]

    # candidate barred matrices from the two block products; the matching
    # candidate reproduces -B21 and hence the converged S
    w_bar = None
    ordering = "blocks"
    ambiguous = not spectral_ok
    if spectral_ok:
        candidates = []
        for name, num, den in (("Z2Z1inv", z2, z1), ("Z1Z2inv", z1, z2)):
            try:
                prod = num @ np.linalg.inv(den)
            except np.linalg.LinAlgError:
                candidates.append((name, None, np.inf))
                continue
            cand = b22 @ prod
            w_cand = np.array(w_of_m, dtype=complex)
            w_cand[n:, : n] = -cand
            s_cand = w_cand / tau + t
            res = _fixed_point_residual(s_cand, t, td, tau)
            candidates.append((name, cand, res))

        candidates.sort(key=lambda c: c[2])
        best, runner = candidates[0], candidates[1]
        if best[1] is not None:
            w_bar = best[1]
            ordering = best[0]
            ambiguous = np.isfinite(runner[2]) and runner[2] <= 10.0 * best[2]
        elif w_blocks is None:
            raise NotDiagonalizable("both Z block products are singular")
        else:
            ambiguous = True
    if w_bar is None:
        # ill-conditioned eigenbasis but exact converged blocks: the barred
        # matrix is minus the literal lower-left block
        w_bar = -b21

    s = w_of_m / tau + t
    res_fp = _fixed_point_residual(s, t, td, tau)

    eq = MasterEquation(sys, tau, branch)
    eqr = eq.residual_w(b21, b22)
    master = np.inf if eqr is None else float(np.linalg.norm(eqr))

    if np.linalg.norm(np.asarray(w_bar).imag) <= 1e-9 * (
        1.0 + np.linalg.norm(np.asarray(w_bar).real)
    ):
        w_bar = np.asarray(w_bar).real.astype(float)

    checks = _structure_checks(t, tau, w_of_m, w_bar, b22, z3, upper_norm,
                               spectral_ok)
    ambiguous = bool(ambiguous) or not all(ok for _, ok in checks)

    return LambertSolution(
        tau=float(tau),
        branch=_achieved_branch(b22),
        Q=q,
        M=m,
        eigvals_M=vals,
        Z_blocks=(z1, z2, z3, z4),
        W_of_M=w_of_m,
        W22=np.asarray(b22),
        W21=np.asarray(w_bar),
        w21_block=np.asarray(b21),
        S=np.asarray(s),
        residual_fixed_point=res_fp,
        master_residual=master,
        ordering=ordering,
        ambiguous=bool(ambiguous),
        upper_rows_norm=upper_norm,
        checks=checks,
    )


def _mode_table(sys):
    """Per-mode couplings in the Laplacian eigenbasis.

    Returns (V, d_modes, alpha_modes, gamma).  For graphs whose degree and
    adjacency matrices commute (regular graphs) the decomposition is exact;
    otherwise it is the natural approximation and the full Newton absorbs
    the difference.
    """
    t, td, n = _split_sys(sys)
    d_blk = -t[n:, : n]
    a_blk = td[n:, : n]
    gamma = getattr(sys, "gamma", None)
    if gamma is None:
        nz = a_blk != 0
        gamma = (
            float(np.median(td[n:, n:][nz] / a_blk[nz])) if nz.any() else 1.0
        )
    lap = d_blk - a_blk
    _, v = np.linalg.eigh(0.5 * (lap + lap.T))
    dm = np.einsum("ij,jk,ki->i", v.T, d_blk, v)
    am = np.einsum("ij,jk,ki->i", v.T, a_blk, v)
    return v, dm, am, float(gamma)


def _mode_pairing(sys, tau, d, alpha, gamma):
    """(eta, mu) of the rightmost real-pairable root pair of one mode.

    Scans the 2x2 single-mode system for its rightmost characteristic
    roots.  A complex pair pairs with itself; a real root pairs with the
    next real root down.  An unpairable real root (no real partner exists
    once deeper roots have merged into complex pairs) is dropped in favor
    of the rightmost complex pair: root pairs with a real sum and product
    are the only ones a real solution block can carry.
    """
    from .oracle import default_region, find_roots
    from .system import DelaySystem

    mode = DelaySystem(
        T=np.array([[0.0, 1.0], [-d, -gamma * d]]),
        T_d=np.array([[0.0, 0.0], [alpha, gamma * alpha]]),
    )
    depth = -2.0
    while True:
        spectrum = find_roots(mode, tau, default_region(mode, tau, re_min=depth))
        roots = sorted(
            (complex(r) for r, m in zip(spectrum.roots, spectrum.multiplicities)
             for _ in range(m)),
            key=lambda z: (-z.real, abs(z.imag)),
        )
        reals = [z.real for z in roots if z.imag == 0]
        pairs = [z for z in roots if z.imag > 0]
        if roots:
            rightmost = roots[0]
            if rightmost.imag > 0:
                return 2.0 * rightmost.real, -abs(rightmost) ** 2
            if len(reals) >= 2:
                return reals[0] + reals[1], -reals[0] * reals[1]
            if pairs:
                return 2.0 * pairs[0].real, -abs(pairs[0]) ** 2
        if depth <= -64.0:
            return None
        depth *= 2.0


def _mode_start(sys, tau: float):
    """Packed cold W start assembled from single-mode root pairings.

    Builds each mode's quadratic (eta, mu) from its own rightmost roots,
    converts to the W blocks b21 = tau(mu + d), b22 = tau(eta + gamma d),
    and rotates back through the Laplacian eigenbasis.  None when any mode
    has no real-pairable roots in reach.
    """
    v, dm, am, gamma = _mode_table(sys)
    b21_diag = np.empty(dm.size)
    b22_diag = np.empty(dm.size)
    for j in range(dm.size):
        pairing = _mode_pairing(sys, tau, float(dm[j]), float(am[j]), gamma)
        if pairing is None:
            return None
        eta, mu = pairing
        b21_diag[j] = tau * (mu + dm[j])
        b22_diag[j] = tau * (eta + gamma * dm[j])
    b21 = (v * b21_diag) @ v.T
    b22 = (v * b22_diag) @ v.T
    return np.concatenate([b21.ravel(), b22.ravel()])


def _q_from_w(eq: MasterEquation, x, q_anchor):
    """Q reproducing the converged W blocks, as anchor + min-norm correction."""
    b21, b22 = eq.unpack(x)
    w = np.zeros((eq.dim, eq.dim))
    w[eq.n :, : eq.n] = b21
    w[eq.n :, eq.n :] = b22
    m_fix = w @ expm(w)
    delta = m_fix - eq.tautd @ np.asarray(q_anchor, dtype=float)
    correction, *_ = np.linalg.lstsq(eq.tautd, delta, rcond=None)
    return np.asarray(q_anchor, dtype=float) + correction


def _symmetry_gap(b21: np.ndarray, b22: np.ndarray) -> float:
    """Relative asymmetry of the converged lower blocks.

    Zero (to rounding) on the structurally clean sheet of a regular graph;
    O(tau^2) on irregular graphs where the symmetric identities only hold
    approximately; O(1) on a skew sheet that split a degenerate mode
    eigenspace along non-orthogonal directions.
    """
    g1 = np.linalg.norm(b21 - b21.T) / (1.0 + np.linalg.norm(b21))
    g2 = np.linalg.norm(b22 - b22.T) / (1.0 + np.linalg.norm(b22))
    return float(max(g1, g2))


def _cold_state(sys, tau: float, spectrum=None, max_iter: int = 200):
    """Freshly seeded Newton state at one delay, no continuation.

    Tries the scan-seeded bootstrap under both branch conversions of M0,
    then the per-direction mode start, and returns the first converged
    state whose blocks are symmetric to rounding.  When no start is that
    clean, the least-asymmetric converged state wins: degenerate mode
    eigenspaces (regular graphs with repeated Laplacian eigenvalues)
    admit genuine skew fixed points that carry the right roots paired
    along non-orthogonal directions, and preferring the symmetric sheet
    keeps the block identities exact whenever a clean sheet exists.
    Raises NonConvergence carrying the last stall message when every cold
    rung fails, which near a fold means no real solution sheet exists at
    this delay.  A freshly born sheet can be very ill-conditioned, so
    callers recovering from a fold gap pass a larger max_iter to let the
    damped steps grind down.
    """
    q0 = initial_guess_Q(
        sys, tau, bootstrap_spectrum(sys, tau) if spectrum is None else spectrum
    )
    eq = MasterEquation(sys, tau, 0)
    m0 = eq.tautd @ np.asarray(q0, dtype=float)
    last = None
    starts = []
    for conv in (0, -1):
        try:
            starts.append(MasterEquation(sys, tau, conv).start_from_M(
                m0[eq.n :, : eq.n], m0[eq.n :, eq.n :]
            ))
        except (NonConvergence, NotDiagonalizable) as exc:
            last = exc
    x_mode = _mode_start(sys, tau)
    if x_mode is not None:
        starts.append(x_mode)
    best = None
    for x0 in starts:
        try:
            state = _newton(eq, x0, tol=1e-10 * eq.scale, max_iter=max_iter)
        except (NonConvergence, NotDiagonalizable) as exc:
            last = exc
            continue
        gap = _symmetry_gap(*eq.unpack(state.x))
        if gap <= 1e-7:
            return eq, state, q0
        if best is None or gap < best[0]:
            best = (gap, state)
    if best is not None:
        return eq, best[1], q0
    raise NonConvergence(
        f"cold starts failed at delay {tau:.6g}"
        + (f": {last}" if last is not None else "")
    )


def _principal_state(sys, tau: float, spectrum=None, _depth: int = 0):
    """Converged Newton state for the delay, with a continuation fallback.

    Tries the cold starts first.  If no basin is reached (large delays put
    the bootstrap far from the sheet), the delay is halved until a cold
    start works and the solution is walked back up in warm-started steps;
    the W blocks vary smoothly in tau, so short continuation steps stay
    inside the basin.
    """
    spectrum = bootstrap_spectrum(sys, tau) if spectrum is None else spectrum
    try:
        return _cold_state(sys, tau, spectrum)
    except NonConvergence:
        if _depth >= 5:
            raise NonConvergence(
                f"no convergent start found down to delay {tau:.3g}"
            ) from None
    _, half_state, _ = _principal_state(sys, tau / 2.0, None, _depth + 1)
    x = half_state.x
    state = half_state
    for step_tau in np.linspace(tau / 2.0, tau, 7)[1:]:
        eq_s = MasterEquation(sys, float(step_tau), 0)
        state = _newton(eq_s, x, tol=1e-10 * eq_s.scale)
        x = state.x
    return MasterEquation(sys, tau, 0), state, initial_guess_Q(sys, tau, spectrum)


def secondary_start(sys, tau: float, sol: "LambertSolution") -> np.ndarray | None:
    """Packed W-space start on the other real sheet of a converged solution.

    Re-evaluates W of the solution's M with the opposite branch map (the
    secondary map puts W_{-1} on real negative eigenvalues): same M,
    different W preimage, which is a genuine second starting point because
    the iteration runs over W.  Near a fold the two preimages are close and
    the solve converges; far from folds a real secondary fixed point need
    not exist at all, in which case the solve is expected to fail.

    Returns None when the swap reproduces the solution's own W (no real
    negative eigenvalue to act on).
    """
    t, td, n = _split_sys(sys)
    m = np.asarray(sol.M, dtype=float)
    w22 = np.asarray(sol.W22, dtype=float)
    for conv in (-1, 0):
        blocks = MasterEquation(sys, tau, conv).w_blocks(m[n:, : n], m[n:, n:])
        if blocks is None:
            continue
        b21, b22 = blocks
        if (np.linalg.norm(np.real(b22) - w22)
                > 1e-9 * (1.0 + np.linalg.norm(w22))):
            return MasterEquation(sys, tau, conv).pack(
                np.real(b21), np.real(b22)
            )
    return None


def branch_sweep(sys, tau: float, spectrum=None):
    """Converged solutions for the real branches at one delay.

    Always produces the solution reached from the scan-seeded start (with a
    delay-continuation fallback).  When nonzero eigenvalues of M are real
    negative (necessarily in [-1/e, 0)) the other real branch is attempted
    from the second W preimage of the same M; a secondary fixed point with
    real blocks only exists where the branch roots pair up, so a failed or
    duplicate secondary solve just leaves the single result.
    """
    eq, state, q0 = _principal_state(sys, tau, spectrum)
    q_principal = _q_from_w(eq, state.x, q0)
    sols = [build_solution(sys, tau, q_principal, branch=0,
                           w_blocks=eq.unpack(state.x))]

    x0 = secondary_start(sys, tau, sols[0])
    if x0 is not None:
        try:
            eq2, state2 = _solve_w(sys, tau, x0, branch=-1)
        except (NonConvergence, NotDiagonalizable):
            return sols
        q_sec = _q_from_w(eq2, state2.x, q_principal)
        try:
            cand = build_solution(sys, tau, q_sec, branch=-1,
                                  w_blocks=eq2.unpack(state2.x))
        except (SingularM22, NotDiagonalizable):
            return sols
        # only a genuinely secondary-labeled, distinct fixed point counts;
        # the rescue machinery can wander back to another principal one
        if cand.branch == -1 and (
            np.linalg.norm(cand.S - sols[0].S)
            > 1e-6 * (1.0 + np.linalg.norm(sols[0].S))
        ):
            sols.append(cand)
    return sols
