"""Per-iteration metrics and their CSV / JSONL encodings."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

CSV_HEADER = ("iter", "f_mean", "grad_norm_sq", "consensus_err", "max_consensus_err", "sim_time")


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    f_mean: float
    grad_norm_sq: float
    consensus_err: float
    max_consensus_err: float
    sim_time: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.f_mean, self.grad_norm_sq, self.consensus_err,
                                              self.max_consensus_err, self.sim_time))

    def csv_row(self) -> str:
        vals = (self.f_mean, self.grad_norm_sq, self.consensus_err, self.max_consensus_err, self.sim_time)
        return ",".join([str(self.iteration)] + [format(v, ".17g") for v in vals])

    def json_line(self) -> str:
        return json.dumps(asdict(self), allow_nan=True)


def consensus_errors(z: np.ndarray, x_bar: np.ndarray) -> tuple[float, float]:
    """Mean and max over nodes of ``||z_i - x_bar||^2``."""
    sq = np.sum((z - x_bar) ** 2, axis=1)
    return float(sq.mean()), float(sq.max())


def measure(k: int, obj, z: np.ndarray, x_bar: np.ndarray, sim_time: float) -> MetricsRecord:
    with np.errstate(all="ignore"):
        g = obj.grad(x_bar)
        mean_err, max_err = consensus_errors(z, x_bar)
        return MetricsRecord(k, float(obj.value(x_bar)), float(g @ g), mean_err, max_err, float(sim_time))


def write_csv(records, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")


def write_jsonl(records, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(r.json_line() + "\n")
