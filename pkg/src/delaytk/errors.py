"""Exception types shared across the package.

Every error raised by library code derives from :class:`DelaytkError` so
callers (and the CLI exit-code mapping) can distinguish domain failures from
programming errors.
"""


class DelaytkError(Exception):
    """Base class for all domain errors."""


class InvalidInput(DelaytkError):
    """Malformed or out-of-contract caller input (files, ranges, shapes)."""


# graph layer -----------------------------------------------------------

class SelfLoop(InvalidInput):
    """An edge (i, i) was supplied; graphs here are simple."""


class DuplicateEdge(InvalidInput):
    """The same undirected edge appeared twice after canonicalization."""


class Disconnected(InvalidInput):
    """The graph is not connected; consensus requires a spanning component."""


class SingularAdjacency(InvalidInput):
    """det(A) = 0 in exact arithmetic; the pipeline needs invertible A."""


# system layer ----------------------------------------------------------

class ZeroGamma(InvalidInput):
    """Velocity coupling gamma must be nonzero."""


# Lambert W layer -------------------------------------------------------

class UndefinedAtZero(DelaytkError):
    """W_k(0) is undefined for every branch k != 0."""


class NonConvergence(DelaytkError):
    """An iteration failed to reach its tolerance within the budget."""


class NotDiagonalizable(DelaytkError):
    """Eigenvector matrix too ill-conditioned to trust a spectral formula."""


# spectrum oracle -------------------------------------------------------

class GridTooCoarse(DelaytkError):
    """Root scan could not certify a cell; retry with a smaller grid step."""


class BracketInvalid(DelaytkError):
    """Bisection endpoints do not bracket a stability crossing."""


# Lambert solver --------------------------------------------------------

class InsufficientRoots(DelaytkError):
    """Fewer roots available than the 2n needed to seed the solver."""


class SingularM22(DelaytkError):
    """The lower-right block of M is singular; branch structure undefined."""


# stability layer -------------------------------------------------------

class NonRealSpectrum(DelaytkError):
    """Spectra that must be real carry imaginary parts above tolerance."""


class PairingMismatch(DelaytkError):
    """No (eta, mu) pairing reproduces the eigenvalues of S."""


class UnstableAtStart(DelaytkError):
    """Delay sweep asked to start at a tau that is already unstable."""


# simulation layer ------------------------------------------------------

class StepTooLarge(InvalidInput):
    """Integration step exceeds tau/20."""


class NonFiniteState(InvalidInput):
    """A supplied state or history contains NaN/inf."""
