"""Undirected communication graphs with exactly-checked adjacency rank.

Graphs are simple, undirected, connected, and carry 1-indexed vertex labels
externally (file format, edge tuples); matrices handed to the numerical
layers are 0-indexed. Whether the adjacency matrix is invertible is decided
in exact integer arithmetic, never floating point.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    Disconnected,
    DuplicateEdge,
    InvalidInput,
    NonConvergence,
    SelfLoop,
    SingularAdjacency,
)

__all__ = [
    "Graph",
    "adjacency_degree",
    "build_cycle",
    "build_path",
    "build_random",
    "from_edge_list",
    "parse_edge_list",
    "load_edge_list",
    "exact_determinant",
]


def exact_determinant(rows: list[list[int]]) -> int:
    """Determinant of an integer matrix, exactly.

    Bareiss fraction-free elimination: every intermediate quantity is an
    integer and every division is exact, so the result is the true
    determinant with no rounding. Cost O(n^3) with big-int coefficients,
    fine for the graph sizes used here.
    """
    a = [list(map(int, row)) for row in rows]
    n = len(a)
    if n == 0:
        return 1
    if any(len(row) != n for row in a):
        raise InvalidInput("determinant needs a square matrix")
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _fraction_determinant(rows: list[list[int]]) -> Fraction:
    """Plain Gaussian elimination over Fraction. Slow, independent of
    :func:`exact_determinant`; kept in the library so tests can cross-check
    the two routes without duplicating it."""
    a = [[Fraction(v) for v in row] for row in rows]
    n = len(a)
    det = Fraction(1)
    for k in range(n):
        pivot_row = next((i for i in range(k, n) if a[i][k] != 0), None)
        if pivot_row is None:
            return Fraction(0)
        if pivot_row != k:
            a[k], a[pivot_row] = a[pivot_row], a[k]
            det = -det
        det *= a[k][k]
        inv = 1 / a[k][k]
        for i in range(k + 1, n):
            factor = a[i][k] * inv
            if factor:
                for j in range(k, n):
                    a[i][j] -= factor * a[k][j]
    return det


@dataclass(frozen=True)
class Graph:
    """A validated communication topology.

    Attributes
    ----------
    n : int
        Number of agents, >= 2.
    edges : tuple[tuple[int, int], ...]
        Canonical sorted edge list, 1-indexed, i < j for every pair.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    _adjacency_det: int = field(repr=False, compare=False, default=0)

    @property
    def degrees(self) -> tuple[int, ...]:
        deg = [0] * self.n
        for i, j in self.edges:
            deg[i - 1] += 1
            deg[j - 1] += 1
        return tuple(deg)

    @property
    def adjacency_det(self) -> int:
        """Exact determinant of the adjacency matrix."""
        return self._adjacency_det

    def neighbors(self, i: int) -> tuple[int, ...]:
        """1-indexed neighbors of vertex i."""
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return tuple(sorted(out))


def _adjacency_rows(n: int, edges: tuple[tuple[int, int], ...]) -> list[list[int]]:
    rows = [[0] * n for _ in range(n)]
    for i, j in edges:
        rows[i - 1][j - 1] = 1
        rows[j - 1][i - 1] = 1
    return rows


def _is_connected(n: int, edges: tuple[tuple[int, int], ...]) -> bool:
    adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def from_edge_list(n: int, pairs) -> Graph:
    """Build and validate a graph from 1-indexed vertex pairs.

    Pairs are canonicalized to (min, max). Raises SelfLoop, DuplicateEdge,
    InvalidInput (bad n or out-of-range index), Disconnected, or
    SingularAdjacency, in that order of detection.
    """
    if not isinstance(n, int) or n < 2:
        raise InvalidInput(f"need an integer n >= 2, got {n!r}")
    canonical: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for raw in pairs:
        i, j = int(raw[0]), int(raw[1])
        if i == j:
            raise SelfLoop(f"edge ({i}, {j}) is a self-loop")
        if not (1 <= i <= n and 1 <= j <= n):
            raise InvalidInput(f"edge ({i}, {j}) out of range for n={n}")
        e = (i, j) if i < j else (j, i)
        if e in seen:
            raise DuplicateEdge(f"edge {e} listed twice")
        seen.add(e)
        canonical.append(e)
    edges = tuple(sorted(canonical))
    if not _is_connected(n, edges):
        raise Disconnected(f"graph on {n} vertices is not connected")
    det = exact_determinant(_adjacency_rows(n, edges))
    if det == 0:
        raise SingularAdjacency("adjacency matrix is exactly singular")
    return Graph(n=n, edges=edges, _adjacency_det=det)


def build_cycle(n: int) -> Graph:
    """Cycle graph C_n, n >= 3. Singular adjacency whenever n % 4 == 0."""
    if n < 3:
        raise InvalidInput(f"cycle needs n >= 3, got {n}")
    pairs = [(i, i + 1) for i in range(1, n)] + [(1, n)]
    return from_edge_list(n, pairs)


def build_path(n: int) -> Graph:
    """Path graph P_n, n >= 2. Singular adjacency for every odd n."""
    if n < 2:
        raise InvalidInput(f"path needs n >= 2, got {n}")
    return from_edge_list(n, [(i, i + 1) for i in range(1, n)])


def build_random(n: int, seed: int, p: float = 0.5, max_tries: int = 2000) -> Graph:
    """Seeded random connected graph with invertible adjacency.

    Samples edge sets with independent inclusion probability p until one
    passes the full validation chain. Deterministic for a given (n, seed, p).
    """
    if n < 2:
        raise InvalidInput(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    all_pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    for _ in range(max_tries):
        mask = rng.random(len(all_pairs)) < p
        pairs = [e for e, m in zip(all_pairs, mask) if m]
        try:
            return from_edge_list(n, pairs)
        except (Disconnected, SingularAdjacency):
            continue
    raise NonConvergence(f"no valid random graph found for n={n}, seed={seed}")


def adjacency_degree(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """(A, D) as integer arrays, 0-indexed rows/columns."""
    a = np.array(_adjacency_rows(g.n, g.edges), dtype=np.int64)
    d = np.diag(np.asarray(g.degrees, dtype=np.int64))
    return a, d


def parse_edge_list(text: str) -> Graph:
    """Parse the edge-list text format.

    First non-comment line: the vertex count n. Every following non-comment
    line: one edge "i j" (1-indexed). '#' starts a comment; blank lines are
    skipped; LF and CRLF both accepted.
    """
    tokens: list[list[str]] = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.append(body.split())
    if not tokens:
        raise InvalidInput("empty edge-list file")
    if len(tokens[0]) != 1:
        raise InvalidInput(f"first line must be the vertex count, got {tokens[0]!r}")
    try:
        n = int(tokens[0][0])
    except ValueError as exc:
        raise InvalidInput(f"vertex count is not an integer: {tokens[0][0]!r}") from exc
    pairs = []
    for tok in tokens[1:]:
        if len(tok) != 2:
            raise InvalidInput(f"edge line needs two indices, got {tok!r}")
        try:
            pairs.append((int(tok[0]), int(tok[1])))
        except ValueError as exc:
            raise InvalidInput(f"non-integer edge entry in {tok!r}") from exc
    return from_edge_list(n, pairs)


def load_edge_list(path: str | Path) -> Graph:
    """Read a graph from an edge-list file. See :func:`parse_edge_list`."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read graph file {p}: {exc}") from exc
    return parse_edge_list(text)


def write_edge_list(g: Graph, path: str | Path, comment: str = "") -> None:
    """Write a graph in the edge-list text format."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(str(g.n))
    lines.extend(f"{i} {j}" for i, j in g.edges)
    Path(path).write_text("\n".join(lines) + "\n")
