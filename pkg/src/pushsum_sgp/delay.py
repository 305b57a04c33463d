"""Bounded message delays.

Two equivalent views live here:

* :func:`augment` builds the enlarged ``n(tau+1)`` column-stochastic matrix in
  which delayed messages sit on chains of virtual nodes (``x = 0``, ``w = 0`` at
  start) and hop one step closer to their receiver every iteration. This is the
  analysis/oracle representation.
* :class:`MessageBuffer` plus :func:`step_with_delays` is the runtime: every
  pre-weighted message carries its delivery iteration and is summed into the
  receiver when due. Messages survive topology changes.

A delay matrix ``D`` is an ``(n, n)`` integer array; ``D[j, i]`` is the delay of
the message ``i -> j`` and is only read where the mixing weight is positive.
Self-messages are always delivered immediately.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DelayBoundError, ProtocolError, ShapeError
from .pushsum import NetworkState
from .topology import MixingSchedule

DELAY_MODES = ("none", "fixed", "uniform")


@dataclass(frozen=True)
class InTransitMessage:
    payload_x: np.ndarray
    payload_w: float
    sender: int
    receiver: int
    sent_at: int
    deliver_at: int


class DelaySampler:
    """Per-(edge, iteration) delays fixed at send time; ``uniform`` draws from a seeded stream."""

    def __init__(self, mode: str = "fixed", tau: int = 0, seed: int = 0):
        if mode not in DELAY_MODES:
            raise ValueError(f"delay_mode must be one of {DELAY_MODES}, got {mode!r}")
        if tau < 0:
            raise DelayBoundError(f"tau must be >= 0, got {tau}")
        self.mode = mode
        self.tau = int(tau)
        self._rng = np.random.default_rng([seed, 0x64656C61])

    def sample(self, P: np.ndarray, k: int) -> np.ndarray:
        n = P.shape[0]
        edges = (P > 0) & ~np.eye(n, dtype=bool)
        if self.mode == "none" or self.tau == 0:
            return np.zeros((n, n), dtype=np.int64)
        if self.mode == "fixed":
            return np.where(edges, self.tau, 0).astype(np.int64)
        # draw for every slot so the stream does not depend on the sparsity pattern
        draws = self._rng.integers(0, self.tau + 1, size=(n, n))
        return np.where(edges, draws, 0).astype(np.int64)


def _check_delays(P: np.ndarray, delays, tau: int) -> np.ndarray:
    D = np.asarray(delays, dtype=np.int64)
    if D.shape != P.shape:
        raise ShapeError(f"delay matrix shape {D.shape} does not match mixing matrix {P.shape}")
    active = P > 0
    if np.any(D[active] < 0) or np.any(D[active] > tau):
        worst = int(D[active].max()) if np.any(D[active] > tau) else int(D[active].min())
        raise DelayBoundError(f"delay {worst} outside [0, tau={tau}]")
    if np.any(np.diag(D)[np.diag(active)] != 0):
        raise DelayBoundError("self-messages must have delay 0")
    return D


def augment(P, delays, tau: int) -> np.ndarray:
    """Virtual-node augmentation of ``P`` for the given per-edge delays.

    Block row ``r`` (0 = real nodes) of column block 0 holds the weights of
    messages sent with delay ``r``; identity blocks ``(r, r+1)`` forward the
    depth-``r+1`` chain nodes to depth ``r``.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    if tau < 0:
        raise DelayBoundError(f"tau must be >= 0, got {tau}")
    D = _check_delays(P, delays, tau)
    size = n * (tau + 1)
    out = np.zeros((size, size))
    for r in range(tau + 1):
        out[r * n:(r + 1) * n, :n] = np.where(D == r, P, 0.0)
        if r < tau:
            out[r * n:(r + 1) * n, (r + 1) * n:(r + 2) * n] = np.eye(n)
    return out


class MessageBuffer:
    """In-transit messages keyed by delivery iteration."""

    def __init__(self, tau: int):
        self.tau = int(tau)
        self._due: dict[int, list[InTransitMessage]] = defaultdict(list)

    def __len__(self) -> int:
        return sum(len(v) for v in self._due.values())

    def push(self, msg: InTransitMessage) -> None:
        if not 0 <= msg.deliver_at - msg.sent_at <= self.tau:
            raise DelayBoundError(f"message {msg.sender}->{msg.receiver} delayed "
                                  f"{msg.deliver_at - msg.sent_at} > tau={self.tau}")
        self._due[msg.deliver_at].append(msg)

    def pop_due(self, k: int) -> list[InTransitMessage]:
        missed = [t for t in self._due if t < k and self._due[t]]
        if missed:
            raise ProtocolError(f"messages due at iteration {min(missed)} were never delivered (now {k})")
        due = self._due.pop(k, [])
        due.sort(key=lambda m: (m.sender, m.sent_at))
        return due

    def pending(self) -> list[InTransitMessage]:
        return [m for t in sorted(self._due) for m in self._due[t]]

    def mass(self, d: int) -> tuple[np.ndarray, float]:
        """Total numerator and weight currently in flight."""
        x = np.zeros(d)
        w = 0.0
        for m in self.pending():
            x += m.payload_x
            w += m.payload_w
        return x, w


def send(x: np.ndarray, w: np.ndarray, P: np.ndarray, delays: np.ndarray, k: int,
         buffer: MessageBuffer) -> None:
    """Enqueue every node's pre-weighted messages for iteration ``k``."""
    n = P.shape[0]
    for i in range(n):
        for j in np.flatnonzero(P[:, i]):
            p = P[j, i]
            buffer.push(InTransitMessage(p * x[i], p * w[i], i, int(j), k, k + int(delays[j, i])))


def receive(buffer: MessageBuffer, k: int, n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    due = buffer.pop_due(k)
    if not due:
        return np.zeros((n, d)), np.zeros(n)
    receivers = np.array([m.receiver for m in due])
    px = np.stack([m.payload_x for m in due])
    pw = np.array([m.payload_w for m in due])
    return _kernels.deliver(receivers, px, pw, n)


def step_with_delays(net: NetworkState, buffer: MessageBuffer, P, delays,
                     pin_weights: bool = False) -> tuple[NetworkState, MessageBuffer]:
    """One gossip round where message ``i -> j`` lands ``delays[j, i]`` iterations later.

    With ``pin_weights`` the push-sum weights are neither sent nor updated (they
    stay at their current value), which is the biased variant.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (net.n, net.n):
        raise ShapeError(f"mixing matrix shape {P.shape} does not match {net.n} nodes")
    D = _check_delays(P, delays, buffer.tau)
    k = net.iteration
    send(net.x, net.w, P, D, k, buffer)
    x, w = receive(buffer, k, net.n, net.d)
    if pin_weights:
        w = net.w.copy()
    return NetworkState(x, w, k + 1, net.u), buffer


def flush(net: NetworkState, buffer: MessageBuffer, pin_weights: bool = False) -> NetworkState:
    """Deliver everything still in flight without sending anything new across edges."""
    eye = np.eye(net.n)
    zero = np.zeros((net.n, net.n), dtype=np.int64)
    while len(buffer):
        net, buffer = step_with_delays(net, buffer, eye, zero, pin_weights=pin_weights)
    return net


def run_pushsum_with_delays(y0, schedule: MixingSchedule, iters: int, sampler: DelaySampler,
                            flush_at_end: bool = True) -> np.ndarray:
    """PushSum over ``schedule`` with sampled delays; returns de-biased estimates."""
    net = NetworkState.from_vectors(y0)
    buffer = MessageBuffer(sampler.tau)
    for k in range(iters):
        P = schedule.matrix(k)
        net, buffer = step_with_delays(net, buffer, P, sampler.sample(P, k))
    if flush_at_end:
        net = flush(net, buffer)
    return net.z
