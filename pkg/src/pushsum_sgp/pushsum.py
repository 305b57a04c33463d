"""PushSum averaging: gossip step, push-sum weights and de-biasing.

Node states are stored row-wise: ``x`` is ``(n, d)`` and ``w`` is ``(n,)``. The
matrix-form step (``matrix_form_step``) uses the column layout ``X`` of shape
``(d, n)`` and is kept deliberately separate from the per-node engines so it can
serve as an independent reference in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import DebiasDomainError, ShapeError
from .topology import MixingSchedule


@dataclass(frozen=True)
class NodeState:
    x: np.ndarray
    w: float

    @property
    def z(self) -> np.ndarray:
        return debias(self.x, self.w)


@dataclass
class NetworkState:
    """Push-sum numerators ``x``, weights ``w`` and an optional momentum buffer ``u``."""

    x: np.ndarray
    w: np.ndarray
    iteration: int = 0
    u: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.x = np.array(self.x, dtype=np.float64, ndmin=2)
        self.w = np.array(self.w, dtype=np.float64).reshape(-1)
        if self.x.shape[0] != self.w.shape[0]:
            raise ShapeError(f"x has {self.x.shape[0]} rows but w has {self.w.shape[0]} entries")

    @classmethod
    def from_vectors(cls, y0) -> "NetworkState":
        x = np.array(y0, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x, np.ones(x.shape[0]))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def z(self) -> np.ndarray:
        if np.any(self.w <= 0.0):
            bad = int(np.argmin(self.w))
            raise DebiasDomainError(f"node {bad} has push-sum weight {self.w[bad]!r} <= 0")
        return self.x / self.w[:, None]

    def node(self, i: int) -> NodeState:
        return NodeState(self.x[i].copy(), float(self.w[i]))

    def nodes(self) -> list[NodeState]:
        return [self.node(i) for i in range(self.n)]

    def copy(self) -> "NetworkState":
        return replace(self, x=self.x.copy(), w=self.w.copy(),
                       u=None if self.u is None else self.u.copy())


def debias(x, w: float) -> np.ndarray:
    if not w > 0.0:
        raise DebiasDomainError(f"cannot de-bias with push-sum weight {w!r}")
    return np.asarray(x, dtype=np.float64) / w


def _check_mixing(P: np.ndarray, n: int) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (n, n):
        raise ShapeError(f"mixing matrix shape {P.shape} does not match {n} nodes")
    return P


def mix(P: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``P`` to row-stacked numerators and weights with fixed summation order."""
    x_new = _kernels.gossip_mix(P, x)
    w_new = _kernels.gossip_mix(P, w[:, None])[:, 0]
    return x_new, w_new


def gossip_step(net: NetworkState, P) -> NetworkState:
    P = _check_mixing(P, net.n)
    x, w = mix(P, net.x, net.w)
    return NetworkState(x, w, net.iteration + 1, net.u)


def run_pushsum(y0, schedule: MixingSchedule, iters: int) -> np.ndarray:
    """De-biased estimates after ``iters`` gossip steps started from ``y0`` (one row per node)."""
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    net = NetworkState.from_vectors(y0)
    if net.n != schedule.n:
        raise ShapeError(f"{net.n} input vectors for a {schedule.n}-node schedule")
    for k in range(iters):
        net = gossip_step(net, schedule.matrix(k))
    return net.z


def matrix_form_step(X, W, G, P, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Global update ``X <- (X - gamma G) P^T``, ``W <- P W`` on column-stacked states."""
    X = np.asarray(X, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    nbar = P.shape[0]
    if P.shape != (nbar, nbar) or X.shape[1] != nbar or G.shape != X.shape or W.shape != (nbar,):
        raise ShapeError(f"incompatible shapes X{X.shape} G{G.shape} W{W.shape} P{P.shape}")
    return (X - gamma * G) @ P.T, P @ W


def stationary_vector(P) -> np.ndarray:
    """Ergodic limit ``pi`` of a static column-stochastic ``P`` (``P pi = pi``, ``sum(pi) = 1``)."""
    vals, vecs = np.linalg.eig(np.asarray(P, dtype=np.float64))
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()
