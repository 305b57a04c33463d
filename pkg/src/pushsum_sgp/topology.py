"""Time-varying communication topologies and their mixing matrices.

A mixing matrix ``P`` is a plain ``(n, n)`` float64 array. Entry ``P[j, i]`` is
the weight sender ``i`` applies to the message it pushes to receiver ``j``, so
column ``i`` is node ``i``'s outgoing weights and must sum to one. Every node is
its own out-neighbour (positive diagonal) and spreads weight uniformly over its
out-neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csgraph

from .errors import InvalidTopologyError, ShapeError

COLUMN_TOL = 1e-12

KINDS = (
    "one_peer_exponential",
    "two_peer_exponential",
    "undirected_bipartite_exponential",
    "dense_uniform",
    "static_custom",
    "complete_cycling",
)


def _floor_log2(m: int) -> int:
    return m.bit_length() - 1


def exponential_offsets(n: int) -> list[int]:
    """Hop distances ``1, 2, 4, ..., 2**floor(log2(n-1))`` of the directed exponential graph."""
    if n < 2:
        raise InvalidTopologyError(f"exponential graph needs n >= 2, got {n}")
    return [1 << c for c in range(_floor_log2(n - 1) + 1)]


def bipartite_offsets(n: int) -> list[int]:
    """Hop distances ``2**c - 1`` (c >= 1) odd nodes cycle through in the undirected graph.

    One offset per directed hop ``h`` (``2h - 1``), so both exponential kinds
    share the same period; the last offset keeps small graphs such as ``n = 4``
    connected over a period.
    """
    return [2 * h - 1 for h in exponential_offsets(n)]


def _push_matrix(n: int, hops) -> np.ndarray:
    """Uniform-weight matrix where every node keeps a share and pushes to ``i + h`` for each hop."""
    share = 1.0 / (len(hops) + 1)
    P = np.zeros((n, n))
    cols = np.arange(n)
    P[cols, cols] = share
    for h in hops:
        P[(cols + h) % n, cols] += share
    return P


def one_peer_exponential(n: int, k: int) -> np.ndarray:
    if n < 2:
        raise InvalidTopologyError(f"one_peer_exponential needs n >= 2, got {n}")
    offsets = exponential_offsets(n)
    return _push_matrix(n, [offsets[k % len(offsets)]])


def two_peer_exponential(n: int, k: int) -> np.ndarray:
    if n < 3:
        raise InvalidTopologyError(f"two_peer_exponential needs n >= 3, got {n}")
    offsets = exponential_offsets(n)
    period = len(offsets)
    first, second = offsets[k % period], offsets[(k + 1) % period]
    if first % n == second % n:
        raise InvalidTopologyError(f"two_peer offsets {first} and {second} collide modulo n={n}")
    return _push_matrix(n, [first, second])


def undirected_bipartite_exponential(n: int, k: int) -> np.ndarray:
    """Symmetric doubly-stochastic pairing of odd node ``o`` with even node ``o + 2**c - 1``."""
    if n < 2 or n % 2:
        raise InvalidTopologyError(f"undirected_bipartite_exponential needs even n >= 2, got {n}")
    offsets = bipartite_offsets(n)
    hop = offsets[k % len(offsets)]
    P = 0.5 * np.eye(n)
    for odd in range(1, n, 2):
        even = (odd + hop) % n
        P[odd, even] = P[even, odd] = 0.5
    return P


def dense_uniform(n: int) -> np.ndarray:
    if n < 1:
        raise InvalidTopologyError(f"dense_uniform needs n >= 1, got {n}")
    return np.full((n, n), 1.0 / n)


def complete_cycling(n: int, k: int) -> np.ndarray:
    """One-peer push that cycles through every edge of the complete graph: hop ``1 + k mod (n-1)``."""
    if n < 2:
        raise InvalidTopologyError(f"complete_cycling needs n >= 2, got {n}")
    return _push_matrix(n, [1 + k % (n - 1)])


def validate_column_stochastic(P, tol: float = COLUMN_TOL) -> bool:
    """True iff ``P`` is non-negative and every column sums to one within ``tol``."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"mixing matrix must be square, got shape {P.shape}")
    return bool(np.all(P >= 0.0) and np.all(np.abs(P.sum(axis=0) - 1.0) <= tol))


def check_mixing_matrix(P) -> np.ndarray:
    """Validate a user-supplied mixing matrix and return it as float64."""
    P = np.array(P, dtype=np.float64)
    if not validate_column_stochastic(P):
        raise InvalidTopologyError("mixing matrix must be non-negative with columns summing to 1")
    if np.any(P > 1.0) or np.any(np.diag(P) <= 0.0):
        raise InvalidTopologyError("mixing matrix entries must lie in [0, 1] with a positive diagonal")
    return P


@dataclass(frozen=True)
class MixingSchedule:
    """Deterministic generator of ``P^(k)`` for one topology kind."""

    kind: str
    n: int
    static: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidTopologyError(f"unknown topology kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "static_custom":
            if self.static is None:
                raise InvalidTopologyError("static_custom needs a matrix")
            P = check_mixing_matrix(self.static)
            if P.shape[0] != self.n:
                raise InvalidTopologyError(f"static matrix is {P.shape[0]}x{P.shape[0]} but n={self.n}")
            P.setflags(write=False)
            object.__setattr__(self, "static", P)
        else:
            # builds matrix(0) once so bad n fails at construction time
            self.matrix(0)

    @classmethod
    def from_matrix(cls, P) -> "MixingSchedule":
        P = np.asarray(P, dtype=np.float64)
        return cls("static_custom", P.shape[0], P)

    @property
    def period(self) -> int:
        if self.kind in ("one_peer_exponential", "two_peer_exponential"):
            return len(exponential_offsets(self.n))
        if self.kind == "undirected_bipartite_exponential":
            return len(bipartite_offsets(self.n))
        if self.kind == "complete_cycling":
            return self.n - 1
        return 1

    @property
    def symmetric(self) -> bool:
        return all(np.array_equal(self.matrix(k), self.matrix(k).T) for k in range(self.period))

    def matrix(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError(f"iteration index must be non-negative, got {k}")
        if self.kind == "one_peer_exponential":
            return one_peer_exponential(self.n, k)
        if self.kind == "two_peer_exponential":
            return two_peer_exponential(self.n, k)
        if self.kind == "undirected_bipartite_exponential":
            return undirected_bipartite_exponential(self.n, k)
        if self.kind == "dense_uniform":
            return dense_uniform(self.n)
        if self.kind == "complete_cycling":
            return complete_cycling(self.n, k)
        return self.static.copy()

    def max_out_degree(self) -> int:
        """Largest column support (self-loop included) over one period."""
        return max(int((self.matrix(k) > 0).sum(axis=0).max()) for k in range(self.period))


def union_adjacency(schedule: MixingSchedule, start: int, window: int) -> np.ndarray:
    """Boolean adjacency ``A[j, i]`` (edge i -> j) of the union graph over ``window`` iterations."""
    A = np.zeros((schedule.n, schedule.n), dtype=bool)
    for k in range(start, start + window):
        A |= schedule.matrix(k) > 0
    return A


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    count, _ = csgraph.connected_components(adjacency.T.astype(np.int8), directed=True,
                                            connection="strong")
    return count == 1


def diameter(adjacency: np.ndarray) -> float:
    """Longest shortest directed path (hop count); ``inf`` when not strongly connected."""
    dist = csgraph.shortest_path(adjacency.T.astype(np.float64), method="D", unweighted=True)
    return float(dist.max())


def save_matrix_csv(P: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(P, dtype=np.float64), delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> np.ndarray:
    P = np.loadtxt(Path(path), delimiter=",", dtype=np.float64, ndmin=2)
    if P.shape[0] != P.shape[1]:
        raise ShapeError(f"{path}: mixing matrix must be square, got shape {P.shape}")
    return P


def make_schedule(name: str, n: int | None = None) -> MixingSchedule:
    """Build a schedule from a CLI-style name: a kind name or ``static:<csv path>``."""
    if name.startswith("static:"):
        P = load_matrix_csv(name.split(":", 1)[1])
        if n is not None and P.shape[0] != n:
            raise InvalidTopologyError(f"static matrix has {P.shape[0]} nodes but n={n}")
        return MixingSchedule.from_matrix(P)
    if n is None:
        raise InvalidTopologyError(f"topology {name!r} needs a node count")
    return MixingSchedule(name, n)
