"""Spectral stability verdicts and the delay-margin sweep.

A converged solution splits the closed-loop spectrum into n quadratics
s^2 - eta_i s - mu_i: eta comes from the spectrum of (1/tau) W22 - gamma D
and mu from (1/tau) B21 - D, where B21 is the literal lower-left block
(the barred matrix of the block identities is its negative).  The system
is stable exactly when both leading values are negative, after dropping
the consensus direction's structural mu = 0.

sweep_delay walks the delay upward on a fixed grid, warm-starting each
solve from the previous blocks, and reports the last stable grid point;
margin_bisection brackets the same crossing with the root-scan oracle so
the two estimates can be compared independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    BracketInvalid,
    GridTooCoarse,
    InsufficientRoots,
    InvalidInput,
    NonConvergence,
    NonRealSpectrum,
    NotDiagonalizable,
    PairingMismatch,
    SingularM22,
    UnstableAtStart,
)
from .oracle import rightmost_abscissa
from .solver import (
    _cold_state,
    _mode_start,
    _principal_state,
    _q_from_w,
    _solve_w,
    build_solution,
)

__all__ = [
    "StabilityVerdict",
    "DelayMarginResult",
    "eta_mu",
    "reconstruct_roots",
    "necessary_condition",
    "classify",
    "sweep_delay",
    "margin_bisection",
]

_IMAG_TOL = 1e-7
_ROOT_MATCH_TOL = 1e-6
_STRUCTURAL_MU = 1e-8  # |mu| below this (relative) marks the consensus direction


def _degree_matrix(sys) -> np.ndarray:
    n = sys.n
    return -np.asarray(sys.T, dtype=float)[n:, :n]


def _real_descending(mat, what: str) -> np.ndarray:
    """Eigenvalues sorted descending, certified real within tolerance."""
    vals = np.linalg.eigvals(np.asarray(mat))
    scale = 1.0 + float(np.max(np.abs(vals)))
    worst = float(np.max(np.abs(vals.imag)))
    if worst > _IMAG_TOL * scale:
        raise NonRealSpectrum(
            f"{what} spectrum carries imaginary parts up to {worst:.2e} "
            f"(tolerance {_IMAG_TOL * scale:.2e})"
        )
    return np.sort(vals.real)[::-1]


def eta_mu(sol, sys, tau: float):
    """The two real spectra of the stability test, each sorted descending.

    eta_i are the eigenvalues of (1/tau) W22 - gamma D and mu_i those of
    (1/tau) B21 - D.  Both matrices are symmetric at a converged solution,
    so imaginary parts beyond 1e-7 raise NonRealSpectrum.
    """
    d = _degree_matrix(sys)
    gamma = float(sys.gamma)
    eta = _real_descending(np.asarray(sol.W22) / tau - gamma * d, "eta")
    mu = _real_descending(np.asarray(sol.w21_block) / tau - d, "mu")
    return eta, mu


def _offdiag_norm(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat - np.diag(np.diag(mat))))


def _joint_eta_mu(sol, sys, tau: float):
    """(eta_i, mu_i) read off one shared orthonormal eigenbasis.

    The two shifted blocks commute at a converged solution, so a basis
    diagonalizing a generic linear combination diagonalizes both; reading
    the two quadratic coefficients from the same basis vector fixes the
    pairing.  A few mixing coefficients are tried and the basis with the
    least off-diagonal leakage wins, which resolves degeneracies of
    either matrix alone.
    """
    d = _degree_matrix(sys)
    gamma = float(sys.gamma)
    p = np.asarray(sol.W22).real / tau - gamma * d
    q = np.asarray(sol.w21_block).real / tau - d
    p = 0.5 * (p + p.T)
    q = 0.5 * (q + q.T)
    scale_p = 1.0 + float(np.linalg.norm(p))
    scale_q = 1.0 + float(np.linalg.norm(q))
    best = None
    for c in (0.6180339887498949, -0.36787944117144233, 2.414213562373095):
        _, basis = np.linalg.eigh(p + (c * scale_p / scale_q) * q)
        pp = basis.T @ p @ basis
        qq = basis.T @ q @ basis
        leak = _offdiag_norm(pp) / scale_p + _offdiag_norm(qq) / scale_q
        if best is None or leak < best[0]:
            best = (leak, np.diag(pp).copy(), np.diag(qq).copy())
    _, eta, mu = best
    order = np.argsort(-eta)
    return eta[order], mu[order]


def _quadratic_roots(eta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    sq = np.sqrt(eta.astype(complex) ** 2 + 4.0 * mu)
    return np.concatenate([(eta + sq) / 2.0, (eta - sq) / 2.0])


def _multiset_gap(a: np.ndarray, b: np.ndarray) -> float:
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def reconstruct_roots(eta, mu, eig_s=None) -> np.ndarray:
    """Roots of the n quadratics s^2 - eta_i s - mu_i, concatenated.

    eta and mu must be paired (same index = same basis vector).  When
    eig_s is given the 2n values are cross-checked against it as a
    multiset; an independently re-sorted pairing is tried once before
    PairingMismatch is raised.
    """
    eta = np.asarray(eta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if eta.shape != mu.shape:
        raise InvalidInput(f"eta/mu shape mismatch: {eta.shape} vs {mu.shape}")
    roots = _quadratic_roots(eta, mu)
    if eig_s is None:
        return roots
    eig_s = np.asarray(eig_s)
    tol = _ROOT_MATCH_TOL * (1.0 + float(np.max(np.abs(eig_s))))
    if _multiset_gap(roots, eig_s) <= tol:
        return roots
    resorted = _quadratic_roots(np.sort(eta)[::-1], np.sort(mu)[::-1])
    gap = _multiset_gap(resorted, eig_s)
    if gap <= tol:
        return resorted
    raise PairingMismatch(
        f"reconstructed roots miss eig(S) by {gap:.2e} (tolerance {tol:.2e})"
    )


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the spectral test at one delay.

    eta and mu are sorted descending; s_roots keeps the quadratic pairing
    order (root i and root n+i share a quadratic).  eta_lead/mu_lead are
    the values the stability comparison actually used, i.e. with the
    consensus direction's structural mu = 0 dropped.
    """

    eta: np.ndarray
    mu: np.ndarray
    s_roots: np.ndarray
    stable: bool
    ambiguous: bool
    eta_lead: float
    mu_lead: float


def _lead_after_structural(mu_b: np.ndarray, tau: float) -> float:
    """max mu with the consensus direction's structural zero dropped.

    The consensus direction always carries the root pair {0, r}, hence
    mu = -0*r = 0 exactly; that zero says nothing about the disagreement
    dynamics.  Block errors reach mu through a 1/tau factor, so the gate
    widens at small delays; a genuine crossing moves mu by O(delta_tau)
    per grid step and clears it immediately.
    """
    gate = (1.0 + float(np.max(np.abs(mu_b)))) * max(_STRUCTURAL_MU, 1e-9 / tau)
    keep = np.abs(mu_b) > gate
    if not np.any(keep):
        keep = np.ones(len(mu_b), dtype=bool)
    return float(np.max(mu_b[keep]))


def classify(sol, sys, tau: float) -> StabilityVerdict:
    """Stability verdict for one converged solution.

    When the root-closure check holds the verdict reads off the leading
    quadratic coefficients (equivalent to the sign of the rightmost
    reconstructed root).  Solutions whose symmetric block structure has
    degraded (irregular graphs, where the closure gap grows with tau)
    fall back to the rightmost nonzero eigenvalue of S directly, which is
    a certified characteristic root either way, and stay flagged
    ambiguous.  The structural consensus root at the origin never counts
    as an instability.
    """
    s_vals = np.linalg.eigvals(np.asarray(sol.S))
    s_scale = 1.0 + float(np.max(np.abs(s_vals)))
    zero_gate = s_scale * max(1e-6, 1e-9 / tau)
    nonzero = np.abs(s_vals) > zero_gate
    if np.any(nonzero):
        s_lead = float(np.max(s_vals.real[nonzero]))
    else:
        s_lead = float(np.max(s_vals.real))

    quadratic = None
    try:
        eta_b, mu_b = _joint_eta_mu(sol, sys, tau)
        roots = reconstruct_roots(eta_b, mu_b, eig_s=s_vals)
        quadratic = (eta_b, mu_b, roots)
    except PairingMismatch:
        quadratic = None

    if quadratic is not None:
        eta_b, mu_b, roots = quadratic
        eta_lead = float(np.max(eta_b))
        mu_lead = _lead_after_structural(mu_b, tau)
        stable = bool(eta_lead < 0.0 and mu_lead < 0.0)
        ambiguous = bool(sol.ambiguous)
    else:
        d = _degree_matrix(sys)
        eta_b = np.sort(
            np.linalg.eigvals(np.asarray(sol.W22).real / tau
                              - float(sys.gamma) * d).real
        )[::-1]
        mu_b = np.sort(
            np.linalg.eigvals(np.asarray(sol.w21_block).real / tau - d).real
        )[::-1]
        roots = s_vals
        eta_lead = float(eta_b[0])
        mu_lead = _lead_after_structural(mu_b, tau)
        stable = bool(s_lead < 0.0)
        ambiguous = True
    return StabilityVerdict(
        eta=np.sort(eta_b)[::-1],
        mu=np.sort(mu_b)[::-1],
        s_roots=roots,
        stable=stable,
        ambiguous=ambiguous,
        eta_lead=eta_lead,
        mu_lead=mu_lead,
    )


def necessary_condition(sol, g, gamma: float, tau: float) -> bool:
    """Degree-pairing test; False certifies the verdict cannot be stable.

    Lower-bounds the leading quadratic coefficients by the dual Weyl
    inequality lambda_1(X + Y) >= lambda_i(X) + lambda_{n+1-i}(Y): with
    w = eig(W22), wtilde = eig(Wbar) and d all sorted descending, a
    stable system must satisfy (1/tau) w_i < gamma d_i (the degree index
    n+1-i of -gamma D counts from the ascending end, which is d_i
    descending) and -(1/tau) wtilde_i < d_{n+1-i} (Wbar enters the mu
    block negated, flipping its index translation).  The consensus
    direction sits exactly on the second boundary, so only violations
    beyond rounding noise count.  Degraded solutions (irregular graphs)
    can carry conjugate eigenvalue pairs; the bound constrains real
    parts, so those enter through Re and never raise.
    """
    w = np.sort(np.linalg.eigvals(np.asarray(sol.W22)).real)[::-1]
    wtilde = np.sort(np.linalg.eigvals(np.asarray(sol.W21)).real)[::-1]
    deg_desc = np.sort(np.asarray(g.degrees, dtype=float))[::-1]
    deg_asc = deg_desc[::-1]
    # solver error in W enters the comparison divided by tau, so the
    # tolerance has to grow as the delay shrinks or boundary-tight modes
    # (w_i/tau -> gamma*d_i as tau -> 0) raise false alarms
    amp = max(1.0, 1.0 / tau)
    slack_eta = 1e-9 * amp * (1.0 + gamma * deg_desc)
    slack_mu = 1e-9 * amp * (1.0 + deg_asc)
    return bool(
        np.all(w / tau < gamma * deg_desc + slack_eta)
        and np.all(-wtilde / tau < deg_asc + slack_mu)
    )


@dataclass(frozen=True)
class DelayMarginResult:
    """Critical delay estimate plus the evidence trail that produced it.

    verdict_trace rows are (tau, eta_lead, mu_lead) for the sweep and
    (tau, abscissa) for the bisection; reseeds lists sweep delays where
    the warm start failed or the sheet was re-selected from a fresh scan.
    gaps lists (first, last) grid delays that no real solution sheet
    covers (a fold annihilated the carried sheet before a new one was
    born); every delay inside a gap was certified stable by the root-scan
    oracle.  drift rows are (tau, recovered) for cross-checks where the
    carried sheet had lost the oracle's rightmost root.
    """

    tau_star: float
    delta_tau: float
    method: str
    verdict_trace: tuple
    reseeds: tuple = ()
    gaps: tuple = ()
    drift: tuple = ()

    def __post_init__(self):
        if self.method not in ("lambert_sweep", "oracle_bisection"):
            raise InvalidInput(f"unknown margin method {self.method!r}")
        if not self.tau_star > 0:
            raise InvalidInput(f"tau_star must be positive, got {self.tau_star}")
        taus = [row[0] for row in self.verdict_trace]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise InvalidInput("verdict trace must be strictly increasing in tau")
        if any(lo > hi for lo, hi in self.gaps):
            raise InvalidInput("gap endpoints must satisfy lo <= hi")


_STEP_ERRORS = (NonConvergence, NotDiagonalizable, SingularM22,
                GridTooCoarse, InsufficientRoots)
# recovery offsets (in grid points) probed after a fold annihilates the
# carried sheet: dense at first, then strided out to a bounded horizon
_GAP_OFFSETS = (1, 2, 3, 4, 5, 6, 8, 10, 13, 16, 20, 25, 32, 40, 50, 64)


def _accept_step(sys, tau, eq, state, q_anchor, prev_roots, jump_tol):
    """Build and vet one sweep point; a root-set jump rejects it.

    Warm continuation can converge onto a genuine fixed point of the
    master equation that carries the wrong root subset (Newton escaping
    its basin near a fold).  The carried roots vary continuously in tau
    on a living sheet, so a jump against the previous accepted step
    rejects the point and forces a reseed.  The reseed rungs pass
    prev_roots = None: where a sheet genuinely ends (two carried real
    roots collide), the correct continuation re-pairs and may swap roots,
    and the fresh root-scan bootstrap is the authority on what is carried.
    """
    b21, b22 = eq.unpack(state.x)
    q = _q_from_w(eq, state.x, q_anchor)
    sol = build_solution(sys, tau, q, w_blocks=(b21, b22))
    v = classify(sol, sys, tau)
    if prev_roots is not None:
        jump = _multiset_gap(np.asarray(v.s_roots), prev_roots)
        if jump > jump_tol:
            raise NonConvergence(
                f"carried root set jumped by {jump:.3f} (gate {jump_tol:.3f})"
            )
    return q, sol, v


def _covers(s_roots, abscissa: float, tol: float = 1e-4) -> bool:
    """True when the carried roots reach the oracle's rightmost abscissa.

    The structural zero is excluded on both sides, so coverage means the
    solution sees the root that actually decides stability.
    """
    roots = np.asarray(s_roots)
    if roots.size == 0:
        return False
    scale = 1.0 + float(np.max(np.abs(roots)))
    nonzero = roots[np.abs(roots) > 1e-8 * scale]
    if nonzero.size == 0:
        return False
    return float(np.max(nonzero.real)) >= abscissa - tol


def _refresh_sheet(sys, tau, q_anchor, jump_tol):
    """Fresh scan-seeded sheet at one delay; None if no cold rung lands."""
    try:
        eq, state, q0 = _cold_state(sys, tau, max_iter=500)
        anchor = q0 if q_anchor is None else q_anchor
        q, sol, v = _accept_step(sys, tau, eq, state, anchor, None, jump_tol)
    except _STEP_ERRORS:
        return None
    return q, sol, v, state


def sweep_delay(sys, tau_start: float, delta_tau: float = 1e-3,
                tau_max: float = 8.0, on_solution=None,
                oracle_every: float = 0.05) -> DelayMarginResult:
    """Walk the delay up a fixed grid until the verdict flips.

    Each grid point solves warm from the previous converged blocks; a
    step whose carried root set jumps discontinuously is retried from a
    fresh root-scan bootstrap, then from the per-direction cold start.
    When every rung fails the grid point usually sits in a fold gap (no
    real sheet exists there); the sweep jumps forward a bounded number of
    points, certifies each skipped delay with the oracle, and resumes on
    the first convergent sheet.

    The carried sheet deforms continuously while deeper root chains rise
    with the delay, so every oracle_every in tau the carried rightmost
    root is cross-checked against the oracle and the sheet re-selected
    from a fresh scan when it no longer covers the true rightmost root.
    A verdict flip is likewise confirmed by the oracle before the sweep
    exits.  tau_star is the last stable grid point (the final grid point
    if the verdict never flips by tau_max).  on_solution, when given, is
    invoked as on_solution(tau, sol, verdict) at every accepted point.
    """
    if not (tau_start > 0.0 and delta_tau > 0.0):
        raise InvalidInput(
            f"need tau_start > 0 and delta_tau > 0, got {tau_start}, {delta_tau}"
        )
    if tau_max < tau_start:
        raise InvalidInput(f"tau_max {tau_max} below tau_start {tau_start}")
    a0, _ = rightmost_abscissa(sys, tau_start)
    if a0 >= 0.0:
        raise UnstableAtStart(
            f"rightmost abscissa {a0:.3e} >= 0 at tau_start = {tau_start}"
        )

    trace = []
    reseeds = []
    gaps = []
    drift = []
    check_every = (max(1, int(round(oracle_every / delta_tau)))
                   if oracle_every else 0)
    x = jac = q_anchor = prev_roots = None
    prev_clean = False
    last_stable = None
    k = 0
    while True:
        tau = tau_start + k * delta_tau
        if tau > tau_max + 0.5 * delta_tau:
            break
        jump_tol = (
            max(0.05, 200.0 * delta_tau)
            * (1.0 + (float(np.max(np.abs(prev_roots)))
                      if prev_roots is not None else 0.0))
        )
        outcome = state = None
        failures = []
        if x is not None:
            try:
                eq, state = _solve_w(sys, tau, x, jacobian=jac)
                outcome = _accept_step(sys, tau, eq, state, q_anchor,
                                       prev_roots, jump_tol)
            except _STEP_ERRORS as exc:
                outcome = state = None
                failures.append(f"warm: {exc}")
        if outcome is None:
            if x is not None:
                reseeds.append(float(tau))
            try:
                eq, state, q0 = _principal_state(sys, tau)
                anchor = q0 if q_anchor is None else q_anchor
                outcome = _accept_step(sys, tau, eq, state, anchor,
                                       None, jump_tol)
            except _STEP_ERRORS as exc:
                outcome = state = None
                failures.append(f"bootstrap: {exc}")
        if outcome is None:
            x_mode = _mode_start(sys, tau)
            if x_mode is None:
                failures.append("mode: no per-direction start available")
            else:
                try:
                    eq, state = _solve_w(sys, tau, x_mode)
                    anchor = q_anchor if q_anchor is not None else np.zeros(
                        (sys.dim, sys.dim)
                    )
                    outcome = _accept_step(sys, tau, eq, state, anchor,
                                           None, jump_tol)
                except _STEP_ERRORS as exc:
                    outcome = state = None
                    failures.append(f"mode: {exc}")
        if outcome is None:
            # Every rung failed.  On irregular graphs a fold can genuinely
            # annihilate the carried sheet: two carried real roots merge
            # and no real solution exists until a new sheet is born a few
            # grid points later.  Jump forward over a bounded gap, certify
            # each skipped delay with the oracle, resume on the new sheet.
            recovered = recovered_state = None
            jumped = 0
            for j in _GAP_OFFSETS:
                tau_try = tau_start + (k + j) * delta_tau
                if tau_try > tau_max + 0.5 * delta_tau:
                    break
                try:
                    eq, state, q0 = _cold_state(sys, tau_try, max_iter=500)
                    anchor = q0 if q_anchor is None else q_anchor
                    recovered = _accept_step(sys, tau_try, eq, state,
                                             anchor, None, jump_tol)
                    recovered_state = state
                    jumped = j
                    break
                except _STEP_ERRORS:
                    continue
            if recovered is None:
                raise NonConvergence(
                    f"sweep step at tau = {tau:.6f}: " + "; ".join(failures)
                    + f"; no sheet recovered within {_GAP_OFFSETS[-1]} grid "
                    "points"
                )
            skipped = [tau_start + (k + i) * delta_tau for i in range(jumped)]
            unstable_in_gap = False
            for tau_gap in skipped:
                a_gap, _ = rightmost_abscissa(sys, tau_gap)
                if a_gap >= 0.0:
                    unstable_in_gap = True
                    break
            gaps.append((skipped[0], skipped[-1]))
            if unstable_in_gap:
                # the verdict flipped inside the uncovered stretch; the
                # reported margin is the last solved stable point, short
                # of the true crossing by at most the gap width
                break
            k += jumped
            tau = tau_start + k * delta_tau
            outcome, state = recovered, recovered_state
        q, sol, v = outcome
        if prev_clean and sol.ambiguous:
            # the warm step slid off the structurally clean sheet (a fold
            # inside a degenerate mode eigenspace can re-pair its roots
            # along skew directions); a fresh cold start prefers the
            # symmetric sheet and, like every scan-seeded reseed, its
            # certified rightmost selection overrides root continuity
            try:
                eq2, state2, q02 = _cold_state(sys, tau, max_iter=500)
                anchor = q_anchor if q_anchor is not None else q02
                restored = _accept_step(sys, tau, eq2, state2, anchor,
                                        None, jump_tol)
                if not restored[1].ambiguous:
                    reseeds.append(float(tau))
                    outcome, state = restored, state2
                    q, sol, v = outcome
            except _STEP_ERRORS:
                pass
        if not v.stable:
            a_exit, _ = rightmost_abscissa(sys, tau)
            if a_exit < -1e-6:
                # flip contradicted by the oracle: a reseed can land on a
                # branch whose leads flip early; only a fresh sheet that
                # covers the oracle's root and still reads stable may
                # continue the sweep
                fresh = _refresh_sheet(sys, tau, q_anchor, jump_tol)
                if (fresh is None or not fresh[2].stable
                        or not _covers(fresh[2].s_roots, a_exit)):
                    raise NonConvergence(
                        f"verdict flipped at tau = {tau:.6f} but the oracle"
                        f" reports abscissa {a_exit:.3e}; no covering sheet"
                        " found"
                    )
                reseeds.append(float(tau))
                q, sol, v, state = fresh
        elif check_every and k > 0 and k % check_every == 0:
            a_chk, _ = rightmost_abscissa(sys, tau)
            if not _covers(v.s_roots, a_chk):
                fresh = _refresh_sheet(sys, tau, q_anchor, jump_tol)
                covering = (fresh is not None
                            and _covers(fresh[2].s_roots, a_chk))
                drift.append((float(tau), bool(covering)))
                if covering and (fresh[2].stable or a_chk >= 0.0):
                    reseeds.append(float(tau))
                    q, sol, v, state = fresh
                elif a_chk >= 0.0:
                    raise NonConvergence(
                        f"oracle reports instability at tau = {tau:.6f} but"
                        " no covering sheet converged to carry the exit"
                    )
        trace.append((float(tau), v.eta_lead, v.mu_lead))
        if on_solution is not None:
            on_solution(float(tau), sol, v)
        if not v.stable:
            break
        last_stable = float(tau)
        x, jac, q_anchor = state.x, state.jacobian, q
        prev_roots = np.asarray(v.s_roots)
        prev_clean = not sol.ambiguous
        k += 1

    if last_stable is None:
        raise UnstableAtStart(
            f"verdict already unstable at tau_start = {tau_start} although "
            "the oracle precheck passed; solution likely off the principal sheet"
        )
    return DelayMarginResult(
        tau_star=last_stable,
        delta_tau=float(delta_tau),
        method="lambert_sweep",
        verdict_trace=tuple(trace),
        reseeds=tuple(reseeds),
        gaps=tuple(gaps),
        drift=tuple(drift),
    )


def margin_bisection(sys, tau_lo: float, tau_hi: float | None = None,
                     tol: float = 1e-4, grid_step: float | None = None
                     ) -> DelayMarginResult:
    """Oracle-side margin: bisect the rightmost-abscissa sign change.

    Same contract as the plain bisection helper but every probe is kept,
    so the result carries a (tau, abscissa) trace; tau_star is the stable
    end of the final bracket, matching the sweep's last-stable convention.
    """
    if not tau_lo > 0:
        raise BracketInvalid(f"need tau_lo > 0, got {tau_lo}")
    if not tol > 0:
        raise InvalidInput(f"tol must be positive, got {tol}")
    probes: dict[float, float] = {}

    def absc(tau: float) -> float:
        a, _ = rightmost_abscissa(sys, tau, grid_step=grid_step)
        probes[float(tau)] = float(a)
        return a

    a_lo = absc(tau_lo)
    if a_lo >= 0.0:
        raise UnstableAtStart(
            f"rightmost abscissa {a_lo:.3e} >= 0 at tau_lo = {tau_lo}"
        )
    if tau_hi is None:
        tau_hi = max(2.0 * tau_lo, 0.5)
        for _ in range(7):
            a_hi = absc(tau_hi)
            if a_hi >= 0.0:
                break
            tau_hi *= 2.0
        else:
            raise BracketInvalid(
                f"no instability found up to tau = {tau_hi}; "
                f"abscissa still {a_hi:.3e}"
            )
    else:
        if not tau_lo < tau_hi:
            raise BracketInvalid(
                f"need tau_lo < tau_hi, got [{tau_lo}, {tau_hi}]"
            )
        a_hi = absc(tau_hi)
        if a_hi < 0.0:
            raise BracketInvalid(
                f"abscissa does not change sign on [{tau_lo}, {tau_hi}]"
            )
    lo, hi = float(tau_lo), float(tau_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if absc(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return DelayMarginResult(
        tau_star=lo,
        delta_tau=float(tol),
        method="oracle_bisection",
        verdict_trace=tuple(sorted(probes.items())),
    )
