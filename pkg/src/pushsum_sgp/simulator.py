"""Iteration-synchronous simulation with per-node wall clocks.

Cost model:

* node ``i`` spends ``compute_time * slowdown[i]`` per gradient, multiplied by
  ``1 + spike_magnitude`` on iterations where it spikes (probability
  ``spike_prob``, drawn from a dedicated seeded stream);
* a point-to-point message arrives ``transfer_time`` after its sender finished
  computing; a receiver cannot finish iteration ``k`` before every message due
  at ``k`` has arrived (SGP: sent at ``k``; overlap SGP: sent up to ``tau``
  iterations earlier);
* an AllReduce round costs ``transfer_time + allreduce_beta * n`` and starts
  when the slowest node is done, after which all clocks agree.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .algorithms import AlgorithmConfig, TrajectoryReport, run
from .errors import ConfigError
from .objectives import Objective


@dataclass(frozen=True)
class SimulationConfig:
    algorithm: AlgorithmConfig
    compute_time: float = 1.0
    transfer_time: float = 0.0
    allreduce_beta: float = 0.0
    slowdown: tuple = ()
    spike_prob: float = 0.0
    spike_magnitude: float = 0.0
    record_every: int = 1
    name: str = ""

    def __post_init__(self):
        for key in ("compute_time", "transfer_time", "allreduce_beta", "spike_magnitude"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ConfigError(f"spike_prob must lie in [0, 1], got {self.spike_prob}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        slow = tuple(float(s) for s in self.slowdown)
        if slow and len(slow) != self.algorithm.n:
            raise ConfigError(f"slowdown has {len(slow)} entries for {self.algorithm.n} nodes")
        if any(s <= 0 for s in slow):
            raise ConfigError("slowdown multipliers must be > 0")
        object.__setattr__(self, "slowdown", slow)
        if self.algorithm.kind == "dpsgd" and not self.algorithm.schedule.symmetric:
            raise ConfigError(f"algorithm=dpsgd needs a symmetric topology, got {self.algorithm.schedule.kind}")

    def slowdowns(self) -> np.ndarray:
        return np.array(self.slowdown) if self.slowdown else np.ones(self.algorithm.n)


@dataclass
class NodeClocks:
    """Per-node simulated clocks advanced by the engine once per iteration."""

    config: SimulationConfig
    clocks: np.ndarray = field(init=False)
    _arrivals: dict = field(init=False, default_factory=lambda: defaultdict(list))

    def __post_init__(self):
        n = self.config.algorithm.n
        self.clocks = np.zeros(n)
        self._base = self.config.compute_time * self.config.slowdowns()
        self._rng = np.random.default_rng([self.config.algorithm.seed, 0x636C6F636B])

    @property
    def time(self) -> float:
        return float(self.clocks.max())

    def compute_durations(self) -> np.ndarray:
        spikes = self._rng.random(self._base.shape[0]) < self.config.spike_prob
        return self._base * np.where(spikes, 1.0 + self.config.spike_magnitude, 1.0)

    def step(self, k: int, edges) -> None:
        """``edges`` rows are ``(sender, receiver, deliver_at)``; ``None`` means an AllReduce round."""
        done = self.clocks + self.compute_durations()
        cfg = self.config
        if edges is None:
            cost = cfg.transfer_time + cfg.allreduce_beta * done.shape[0]
            self.clocks = np.full_like(done, done.max() + cost)
            return
        for s, r, due in np.asarray(edges, dtype=np.int64).reshape(-1, 3):
            self._arrivals[int(due)].append((int(r), done[s] + cfg.transfer_time))
        for r, t in self._arrivals.pop(k, []):
            done[r] = max(done[r], t)
        self.clocks = done


def simulate(config: SimulationConfig, obj: Objective, x0=None, trace: bool = False) -> TrajectoryReport:
    alg = config.algorithm
    if obj.n != alg.n:
        raise ConfigError(f"objective has {obj.n} nodes but the schedule has {alg.n}")
    clock = NodeClocks(config)
    return run(alg, obj, x0=x0, record_every=config.record_every, clock=clock, trace=trace)


def compare(configs, obj: Objective, x0=None) -> list[dict]:
    """Run each configuration on the same objective; one summary row per config."""
    configs = list(configs)
    if not configs:
        raise ConfigError("compare needs at least one configuration")
    rows = []
    for idx, cfg in enumerate(configs):
        report = simulate(cfg, obj, x0=x0)
        last = report.records[-1]
        rows.append({
            "name": cfg.name or f"{cfg.algorithm.kind}#{idx}",
            "algorithm": cfg.algorithm.kind,
            "topology": cfg.algorithm.schedule.kind,
            "gamma": cfg.algorithm.base_gamma,
            "iters": cfg.algorithm.iters,
            "f_mean": last.f_mean,
            "grad_norm_sq": last.grad_norm_sq,
            "consensus_err": last.consensus_err,
            "max_consensus_err": last.max_consensus_err,
            "sim_time": last.sim_time,
            "diverged": report.diverged,
        })
    return rows
