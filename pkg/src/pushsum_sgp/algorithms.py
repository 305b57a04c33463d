"""Optimization engines built on PushSum.

Every step function takes the current :class:`NetworkState` and returns a new
one; per-node randomness comes from ``rngs[i]`` so gradient sampling does not
depend on evaluation order. Gradients are evaluated at the de-biased ``z`` and
applied to the numerators ``x`` (except for the biased overlap ablation, which
has no weights to de-bias with).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .delay import DelaySampler, MessageBuffer, step_with_delays
from .errors import InvalidBaselineError, ProtocolError
from .metrics import MetricsRecord, measure
from .objectives import Objective
from .pushsum import NetworkState, mix
from .topology import MixingSchedule

KINDS = ("sgp", "osgp", "sgp_momentum", "dpsgd", "allreduce_sgd", "biased_osgp")
INITS = ("zeros", "common", "random")
W_TOL = 1e-12


def node_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng([seed, i]) for i in range(n)]


@dataclass(frozen=True)
class AlgorithmConfig:
    kind: str
    schedule: MixingSchedule
    iters: int
    gamma: float | None = None
    tau: int = 0
    momentum: float = 0.0
    seed: int = 0
    osgp_cadence: str = "dense"
    delay_mode: str | None = None
    lr_milestones: tuple = ()
    init: str = "zeros"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown algorithm {self.kind!r}; expected one of {KINDS}")
        if self.iters < 0:
            raise ValueError(f"iters must be >= 0, got {self.iters}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.osgp_cadence not in ("dense", "sparse"):
            raise ValueError(f"osgp_cadence must be 'dense' or 'sparse', got {self.osgp_cadence!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.delay_mode not in (None, "none") and self.kind not in ("osgp", "biased_osgp"):
            raise ValueError(f"delay_mode={self.delay_mode!r} only applies to overlap algorithms")
        object.__setattr__(self, "lr_milestones",
                           tuple(sorted((int(k), float(f)) for k, f in self.lr_milestones)))

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def base_gamma(self) -> float:
        """Configured step-size, or ``sqrt(n / K)`` when unset."""
        if self.gamma is not None:
            return float(self.gamma)
        return math.sqrt(self.n / max(self.iters, 1))

    def step_size(self, k: int) -> float:
        gamma = self.base_gamma
        for at, factor in self.lr_milestones:
            if k >= at:
                gamma *= factor
        return gamma

    @property
    def resolved_delay_mode(self) -> str:
        if self.delay_mode is not None:
            return self.delay_mode
        return "fixed" if self.kind in ("osgp", "biased_osgp") else "none"


@dataclass
class TrajectoryReport:
    records: list[MetricsRecord]
    final_z: np.ndarray
    x_bar: np.ndarray
    final_x: np.ndarray
    final_w: np.ndarray
    diverged: bool = False
    z_trace: list[np.ndarray] = field(default_factory=list, repr=False)
    w_trace: list[np.ndarray] = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# single steps


def sgp_step(net: NetworkState, P, obj: Objective, gamma: float, rngs) -> NetworkState:
    G = obj.stochastic_gradients(net.z, rngs)
    x, w = mix(np.asarray(P, dtype=np.float64), net.x - gamma * G, net.w)
    return NetworkState(x, w, net.iteration + 1, net.u)


def sgp_momentum_step(net: NetworkState, P, obj: Objective, gamma: float, m: float, rngs) -> NetworkState:
    """Nesterov-style local buffer ``u`` (never gossiped) followed by one PushSum round."""
    G = obj.stochastic_gradients(net.z, rngs)
    u = net.u if net.u is not None else np.zeros_like(net.x)
    u = m * u + G
    x, w = mix(np.asarray(P, dtype=np.float64), net.x - gamma * (m * u + G), net.w)
    return NetworkState(x, w, net.iteration + 1, u)


def dpsgd_step(net: NetworkState, P, obj: Objective, gamma: float, rngs) -> NetworkState:
    P = np.asarray(P, dtype=np.float64)
    if not np.array_equal(P, P.T) or np.any(np.abs(P.sum(axis=1) - 1.0) > W_TOL):
        raise InvalidBaselineError("D-PSGD needs a symmetric doubly-stochastic mixing matrix")
    out = sgp_step(net, P, obj, gamma, rngs)
    if np.any(np.abs(out.w - 1.0) > W_TOL):
        raise ProtocolError(f"push-sum weights drifted from 1 under symmetric mixing: {out.w}")
    return out


def allreduce_sgd_step(net: NetworkState, obj: Objective, gamma: float, rngs) -> NetworkState:
    G = obj.stochastic_gradients(net.x, rngs)
    x = net.x - gamma * G.mean(axis=0)
    return NetworkState(x, net.w.copy(), net.iteration + 1, net.u)


def osgp_step(net: NetworkState, buffer: MessageBuffer, schedule: MixingSchedule, obj: Objective,
              gamma: float, sampler: DelaySampler, rngs, cadence: str = "dense",
              biased: bool = False) -> tuple[NetworkState, MessageBuffer, np.ndarray | None]:
    """One overlap-SGP iteration; returns the sent delay matrix (``None`` when nothing was sent).

    ``dense`` sends every iteration; ``sparse`` only when ``k mod tau == 0`` and
    otherwise keeps the whole numerator locally (an identity round that still
    collects due messages).
    """
    k = net.iteration
    point = net.x if biased else net.z
    G = obj.stochastic_gradients(point, rngs)
    half = NetworkState(net.x - gamma * G, net.w, k, net.u)
    tau = sampler.tau
    if cadence == "dense" or tau == 0 or k % tau == 0:
        P = schedule.matrix(k)
        D = sampler.sample(P, k)
    else:
        P = np.eye(net.n)
        D = None
    out, buffer = step_with_delays(half, buffer, P, np.zeros(P.shape, dtype=np.int64) if D is None else D,
                                   pin_weights=biased)
    return out, buffer, (P, D) if D is not None else None


def biased_osgp_step(net, buffer, schedule, obj, gamma, sampler, rngs, cadence="dense"):
    """Overlap SGP that ignores the push-sum weight: ``w`` is pinned and gradients use ``x``."""
    return osgp_step(net, buffer, schedule, obj, gamma, sampler, rngs, cadence, biased=True)


# ---------------------------------------------------------------------------
# full runs


def initial_iterates(config: AlgorithmConfig, d: int) -> np.ndarray:
    n = config.n
    if config.init == "zeros":
        return np.zeros((n, d))
    rng = np.random.default_rng([config.seed, 0x696E6974])
    if config.init == "common":
        return np.broadcast_to(config.init_scale * rng.standard_normal(d), (n, d)).copy()
    return config.init_scale * rng.standard_normal((n, d))


def _edges(P: np.ndarray, D: np.ndarray | None, k: int) -> np.ndarray:
    """``(sender, receiver, deliver_at)`` rows for the non-self messages sent at ``k``."""
    n = P.shape[0]
    recv, send = np.nonzero((P > 0) & ~np.eye(n, dtype=bool))
    delay = np.zeros(len(recv), dtype=np.int64) if D is None else D[recv, send]
    order = np.lexsort((recv, send))
    return np.column_stack([send[order], recv[order], k + delay[order]])


def run(config: AlgorithmConfig, obj: Objective, x0=None, record_every: int = 1, clock=None,
        trace: bool = False) -> TrajectoryReport:
    """Execute ``config.iters`` steps and record metrics every ``record_every`` iterations.

    ``clock`` (see :mod:`pushsum_sgp.simulator`) is advanced once per iteration
    with the messages sent; without it ``sim_time`` stays 0.
    """
    if obj.n != config.n:
        raise ValueError(f"objective has {obj.n} nodes but the schedule has {config.n}")
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    kind = config.kind
    n, d, K = config.n, obj.d, config.iters
    x = initial_iterates(config, d) if x0 is None else np.array(x0, dtype=np.float64).reshape(n, d)
    if kind == "allreduce_sgd":
        x = np.broadcast_to(x.mean(axis=0), (n, d)).copy()
    net = NetworkState(x, np.ones(n))
    if kind == "sgp_momentum":
        net.u = np.zeros((n, d))
    rngs = node_rngs(config.seed, n)
    overlap = kind in ("osgp", "biased_osgp")
    sampler = DelaySampler(config.resolved_delay_mode, config.tau, config.seed) if overlap else None
    buffer = MessageBuffer(config.tau) if overlap else None
    if kind == "dpsgd" and not config.schedule.symmetric:
        raise InvalidBaselineError("D-PSGD needs a symmetric (undirected) schedule")

    def snapshot(k):
        with np.errstate(all="ignore"):
            z = net.x if kind == "biased_osgp" else net.x / net.w[:, None]
            total = net.x.sum(axis=0)
            if buffer is not None:
                total = total + buffer.mass(d)[0]
            x_bar = total / n
        return z, x_bar

    records = []
    z_trace, w_trace = [], []

    def record(k):
        z, x_bar = snapshot(k)
        rec = measure(k, obj, z, x_bar, clock.time if clock is not None else 0.0)
        records.append(rec)
        if trace:
            z_trace.append(z.copy())
            w_trace.append(net.w.copy())
        return rec.is_finite()

    finite = record(0)
    for k in range(K):
        if not finite:
            break
        gamma = config.step_size(k)
        sent = None
        with np.errstate(all="ignore"):
            if overlap:
                net, buffer, sent = osgp_step(net, buffer, config.schedule, obj, gamma, sampler, rngs,
                                              config.osgp_cadence, biased=kind == "biased_osgp")
            elif kind == "allreduce_sgd":
                net = allreduce_sgd_step(net, obj, gamma, rngs)
            else:
                P = config.schedule.matrix(k)
                sent = (P, None)
                if kind == "sgp":
                    net = sgp_step(net, P, obj, gamma, rngs)
                elif kind == "sgp_momentum":
                    net = sgp_momentum_step(net, P, obj, gamma, config.momentum, rngs)
                else:
                    net = dpsgd_step(net, P, obj, gamma, rngs)
        if clock is not None:
            if kind == "allreduce_sgd":
                clock.step(k, None)
            else:
                clock.step(k, _edges(*sent, k) if sent is not None else np.empty((0, 3), dtype=np.int64))
        if (k + 1) % record_every == 0 or k + 1 == K:
            finite = record(k + 1)

    z, x_bar = snapshot(K)
    return TrajectoryReport(records, z, x_bar, net.x.copy(), net.w.copy(), diverged=not finite,
                            z_trace=z_trace, w_trace=w_trace)
