"""Characteristic-root location for delay systems by direct determinant scan.

This is the reference root finder the rest of the package is checked
against: it never touches the Lambert machinery.  Roots of

    det(s I - T - T_d e^{-s tau}) = 0

are located on a rectangular grid by watching the zero-level curves of the
real and imaginary parts of the determinant cross, then polished with a
Newton iteration on the log-determinant.  A boundary winding count (the
argument principle) certifies that no root inside the region was missed;
a failed certificate surfaces as GridTooCoarse so callers can refine.

Only the closed upper half of the region is scanned; real systems have
conjugate-symmetric spectra and conjugates are implied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BracketInvalid, GridTooCoarse, InvalidInput, NonConvergence

__all__ = [
    "SearchRegion",
    "ComplexSpectrum",
    "default_region",
    "find_roots",
    "rightmost_abscissa",
    "critical_delay_bisection",
    "ZERO_ROOT_RADIUS",
]

# |s| below this is treated as the structural consensus root at the origin.
ZERO_ROOT_RADIUS = 1e-7

_NEWTON_MAX_ITER = 120
_RESIDUAL_COEFF = 1e-8  # contract: |det| < coeff * (1+|s|)^dim at a root


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle [re_min, re_max] x [0, im_max] plus its scan resolution."""

    re_min: float
    re_max: float
    im_max: float
    grid_step: float

    def __post_init__(self):
        if not (self.re_min < self.re_max):
            raise InvalidInput(f"re_min {self.re_min} must be < re_max {self.re_max}")
        if not (self.im_max > 0):
            raise InvalidInput(f"im_max must be positive, got {self.im_max}")
        if not (self.grid_step > 0):
            raise InvalidInput(f"grid_step must be positive, got {self.grid_step}")

    def step_cap(self, tau: float) -> float:
        # resolve the vertical root chains: ~10 grid rows per 2 pi / tau band
        if tau > 0:
            return min(0.1, np.pi / (10.0 * tau))
        return 0.1

    def validated_for(self, tau: float) -> "SearchRegion":
        cap = self.step_cap(tau)
        if self.grid_step > cap * (1 + 1e-12):
            raise InvalidInput(
                f"grid_step {self.grid_step} exceeds cap {cap} for tau={tau}"
            )
        return self


@dataclass(frozen=True)
class ComplexSpectrum:
    """Roots found in a region: Im >= 0 representatives only.

    residuals are |det| at each root; multiplicities come from a small
    circular probe of the logarithmic derivative around each root.
    """

    roots: tuple
    residuals: tuple
    multiplicities: tuple
    region: SearchRegion
    dim: int

    def __len__(self):
        return len(self.roots)

    @property
    def pairs(self):
        return tuple(zip(self.roots, self.residuals))

    def nonzero_roots(self):
        return tuple(s for s in self.roots if abs(s) > ZERO_ROOT_RADIUS)

    def count_with_conjugates(self) -> int:
        total = 0
        for s, m in zip(self.roots, self.multiplicities):
            total += m * (2 if s.imag > 0 else 1)
        return total


def _system_blocks(sys):
    t = np.asarray(sys.T, dtype=float)
    td = np.asarray(sys.T_d, dtype=float)
    if t.shape != td.shape or t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise InvalidInput(f"mismatched system blocks {t.shape} vs {td.shape}")
    return t, td


def default_region(sys, tau: float, re_min: float = -2.0) -> SearchRegion:
    """Region guaranteed to contain every root right of re_min.

    Any root satisfies |s| <= ||T|| + ||T_d|| e^{-tau Re s}, so the band
    Re s >= re_min admits the hard cap below; nothing exists above it.
    """
    t, td = _system_blocks(sys)
    nt = float(np.linalg.norm(t, 2))
    ntd = float(np.linalg.norm(td, 2))
    cap = nt + ntd * float(np.exp(-tau * re_min)) + 1.0
    im_max = cap if tau <= 0 else min(cap, max(20.0 / tau, 5.0))
    re_max = nt + ntd + 0.5
    if re_max <= re_min:
        re_max = re_min + 1.0
    step = min(0.1, np.pi / (10.0 * tau)) if tau > 0 else 0.1
    return SearchRegion(re_min, re_max, im_max, step)


def _char_dets(t, td, tau, s):
    """det(sI - T - T_d e^{-s tau}) for an array of s, stacked."""
    s = np.asarray(s, dtype=complex)
    dim = t.shape[0]
    eye = np.eye(dim)
    x = (
        s[..., None, None] * eye
        - t
        - td * np.exp(-tau * s)[..., None, None]
    )
    return np.linalg.det(x)


def _char_matrix(t, td, tau, s):
    dim = t.shape[0]
    return s * np.eye(dim) - t - td * np.exp(-tau * s)


def _char_matrix_prime(t, td, tau, s):
    dim = t.shape[0]
    return np.eye(dim) + tau * td * np.exp(-tau * s)


def _log_derivative(t, td, tau, s):
    """d/ds log det X(s) = tr(X^{-1} X'); None at a numerically exact root."""
    x = _char_matrix(t, td, tau, s)
    xp = _char_matrix_prime(t, td, tau, s)
    try:
        a = np.linalg.solve(x, xp)
    except np.linalg.LinAlgError:
        return None
    tr = np.trace(a)
    if not np.isfinite(tr):
        return None
    return complex(tr)


def _residual_ok(t, td, tau, s, dim):
    det = complex(_char_dets(t, td, tau, np.array([s]))[0])
    return abs(det), abs(det) <= _RESIDUAL_COEFF * (1.0 + abs(s)) ** dim


def _polish(t, td, tau, s0, dim):
    """Newton on the log-determinant from s0.

    Plain steps converge linearly near multiple roots, which is still fast
    enough at these scales; acceptance is by the determinant residual, since
    step size bottoms out near eps^{1/m} for an m-fold root.
    """
    s = complex(s0)
    for _ in range(_NEWTON_MAX_ITER):
        tr = _log_derivative(t, td, tau, s)
        if tr is None or tr == 0:
            break
        step = -1.0 / tr
        s = s + step
        if abs(step) <= 1e-13 * (1.0 + abs(s)):
            break
    _, ok = _residual_ok(t, td, tau, s, dim)
    return s if ok else None


def _multiplicity(t, td, tau, s, dim, clearance):
    """Circular probe of the log-derivative: the 4-direction average of
    p * tr(X^{-1}X')(s+p) equals the multiplicity exactly for any isolated
    root (distant simple roots average out to zero over the circle)."""
    r = min(1e-4, 0.3 * clearance)
    r = max(r, 1e-9 * (1.0 + abs(s)))
    acc = 0.0
    got = 0
    for p in (r, 1j * r, -r, -1j * r):
        tr = _log_derivative(t, td, tau, s + p)
        if tr is None:
            continue
        acc += (p * tr).real
        got += 1
    if got == 0:
        return 1
    return max(1, int(round(acc / got)))


def _grid_candidates(t, td, tau, region):
    h = region.grid_step
    re = np.arange(region.re_min, region.re_max + h / 2, h)
    im = np.arange(0.0, region.im_max + h / 2, h)
    s = re[None, :] + 1j * im[:, None]
    dets = _char_dets(t, td, tau, s)

    starts = []

    # cells where both zero-level curves pass: sign changes of Re and Im
    # among the 4 corners (zeros count as sign changes on both sides)
    def _mixed(v):
        pos = v > 0
        nonneg = v >= 0
        c = pos[:-1, :-1] & pos[:-1, 1:] & pos[1:, :-1] & pos[1:, 1:]
        d = ~nonneg[:-1, :-1] & ~nonneg[:-1, 1:] & ~nonneg[1:, :-1] & ~nonneg[1:, 1:]
        return ~(c | d)

    cells = _mixed(dets.real) & _mixed(dets.imag)
    ii, jj = np.nonzero(cells)
    for i, j in zip(ii, jj):
        starts.append(complex(re[j] + h / 2, im[i] + h / 2))

    # the real axis: det is real there, so scan its sign changes separately
    row = dets[0].real
    flips = np.nonzero((row[:-1] * row[1:]) <= 0)[0]
    for j in flips:
        starts.append(complex(re[j] + h / 2, 0.0))

    # strict local minima of |det| well below the ambient level pick up
    # near-tangential double roots the sign tests can miss
    mag = np.abs(dets)
    if mag.shape[0] >= 3 and mag.shape[1] >= 3:
        inner = mag[1:-1, 1:-1]
        isloc = np.ones_like(inner, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                isloc &= inner <= mag[1 + di : mag.shape[0] - 1 + di,
                                      1 + dj : mag.shape[1] - 1 + dj]
        floor = np.percentile(mag, 10.0)
        ii, jj = np.nonzero(isloc & (inner < floor))
        for i, j in zip(ii, jj):
            starts.append(complex(re[j + 1], im[i + 1]))
    return starts


def _winding(t, td, tau, region, per_cell=8):
    """Winding number of the determinant around the full (conjugate-closed)
    rectangle; equals the number of enclosed roots with multiplicity."""
    h = region.grid_step
    a, b = region.re_min, region.re_max
    c = region.im_max
    corners = [a - 1j * c, b - 1j * c, b + 1j * c, a + 1j * c, a - 1j * c]
    for attempt in range(5):
        total = 0.0
        resolved = True
        for p, q in zip(corners[:-1], corners[1:]):
            n = max(64, int(abs(q - p) / h) * per_cell)
            pts = p + (q - p) * np.linspace(0.0, 1.0, n + 1)
            d = _char_dets(t, td, tau, pts)
            if not np.all(np.isfinite(d)) or np.any(np.abs(d) == 0.0):
                resolved = False
                break
            ang = np.angle(d[1:] / d[:-1])
            if np.max(np.abs(ang)) > np.pi / 2:
                resolved = False
                break
            total += float(np.sum(ang))
        if resolved:
            return int(round(total / (2 * np.pi)))
        per_cell *= 2
    raise GridTooCoarse(
        "boundary phase could not be resolved; a root sits too close to the "
        "region boundary or the grid step is too large"
    )


def find_roots(sys, tau: float, region: SearchRegion, certify: bool = True) -> ComplexSpectrum:
    """All characteristic roots inside region (upper half; conjugates implied).

    Raises GridTooCoarse when the boundary winding count disagrees with the
    roots actually located, i.e. the scan provably missed something.
    """
    if not np.isfinite(tau) or tau < 0:
        raise InvalidInput(f"delay must be finite and nonnegative, got {tau}")
    t, td = _system_blocks(sys)
    dim = t.shape[0]
    region.validated_for(tau)

    starts = _grid_candidates(t, td, tau, region)
    h = region.grid_step

    found = []
    for s0 in starts:
        s = _polish(t, td, tau, s0, dim)
        if s is None:
            continue
        if s.imag < 0:
            s = s.conjugate()
        if abs(s.imag) <= 1e-9 * (1.0 + abs(s)):
            s = complex(s.real, 0.0)
        # polishing may wander out of the rectangle; those roots belong to
        # neighboring cells of a different region
        if not (region.re_min - 1e-9 <= s.real <= region.re_max + 1e-9):
            continue
        if not (-1e-9 <= s.imag <= region.im_max + 1e-9):
            continue
        for other in found:
            if abs(s - other) <= 1e-6 * (1.0 + abs(other)):
                break
        else:
            found.append(s)

    found.sort(key=lambda z: (-z.real, z.imag))
    mults = []
    residuals = []
    for s in found:
        clearance = min(
            (abs(s - o) for o in found if o is not s),
            default=1.0,
        )
        mults.append(_multiplicity(t, td, tau, s, dim, clearance))
        residuals.append(_residual_ok(t, td, tau, s, dim)[0])

    spec = ComplexSpectrum(
        roots=tuple(found),
        residuals=tuple(residuals),
        multiplicities=tuple(mults),
        region=region,
        dim=dim,
    )

    if certify:
        expected = _winding(t, td, tau, region, per_cell=max(8, int(np.ceil(0.4 / h))))
        if expected != spec.count_with_conjugates():
            raise GridTooCoarse(
                f"winding count {expected} but located "
                f"{spec.count_with_conjugates()} roots (with conjugates); "
                f"grid_step {h} is too coarse for this region"
            )
    return spec


def rightmost_abscissa(sys, tau: float, re_min: float = -2.0,
                       grid_step: float | None = None,
                       exclude_zero: bool = True):
    """Largest Re(s) over (by default, nonzero) roots; adaptively deepens the
    region when everything interesting lies left of it.

    Returns (abscissa, spectrum).  The structural consensus root at the
    origin does not count as an instability.
    """
    t, td = _system_blocks(sys)
    probe = DelayPair(t, td)
    depth = re_min
    refinements = 0
    while True:
        base = default_region(probe, tau, re_min=depth)
        step = base.grid_step if grid_step is None else grid_step
        region = SearchRegion(base.re_min, base.re_max, base.im_max, step)
        try:
            spectrum = find_roots(probe, tau, region)
        except GridTooCoarse:
            if refinements >= 2:
                raise
            refinements += 1
            grid_step = region.grid_step / 2.0
            continue
        roots = spectrum.nonzero_roots() if exclude_zero else spectrum.roots
        if roots:
            return max(r.real for r in roots), spectrum
        if depth <= -64.0:
            raise NonConvergence(
                f"no usable characteristic roots right of Re(s) = {depth}"
            )
        depth *= 2.0


class DelayPair:
    """Minimal (T, T_d) holder so the oracle can run on bare matrices."""

    def __init__(self, t, td):
        self.T = np.asarray(t, dtype=float)
        self.T_d = np.asarray(td, dtype=float)


def critical_delay_bisection(sys, tau_lo: float, tau_hi: float | None = None,
                             tol: float = 1e-6,
                             grid_step: float | None = None) -> float:
    """Delay at which the rightmost nonzero abscissa crosses zero.

    Requires a sign bracket abscissa(tau_lo) < 0 <= abscissa(tau_hi); with
    tau_hi omitted the upper end grows by doubling until the sign flips.
    """
    if tau_lo < 0:
        raise BracketInvalid(f"need tau_lo >= 0, got {tau_lo}")
    if not (tol > 0):
        raise InvalidInput(f"tol must be positive, got {tol}")
    a_lo, _ = rightmost_abscissa(sys, tau_lo, grid_step=grid_step)
    if tau_hi is None:
        tau_hi = max(2.0 * tau_lo, 0.5)
        for _ in range(7):
            a_hi, _ = rightmost_abscissa(sys, tau_hi, grid_step=grid_step)
            if a_hi >= 0:
                break
            tau_hi *= 2.0
        else:
            raise BracketInvalid(
                f"no instability found up to tau = {tau_hi}; still "
                f"abscissa {a_hi:.3e}"
            )
    else:
        if not (tau_lo < tau_hi):
            raise BracketInvalid(f"need tau_lo < tau_hi, got [{tau_lo}, {tau_hi}]")
        a_hi, _ = rightmost_abscissa(sys, tau_hi, grid_step=grid_step)
    if not (a_lo < 0 <= a_hi):
        raise BracketInvalid(
            f"abscissa does not change sign on [{tau_lo}, {tau_hi}]: "
            f"{a_lo:.3e} vs {a_hi:.3e}"
        )
    lo, hi = tau_lo, tau_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        a_mid, _ = rightmost_abscissa(sys, mid, grid_step=grid_step)
        if a_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
