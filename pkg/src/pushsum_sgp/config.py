"""Declarative run configuration.

A config file is either JSON (an object of flat keys) or a flat ``key = value``
text file. In the flat form ``#`` starts a comment, values are parsed as JSON
literals when possible (``0.1``, ``true``, ``[[100, 0.1]]``, ``"text"``) and are
otherwise taken as bare strings. Unknown or duplicated keys are rejected, and
every validation error names the offending line.
"""

from __future__ import annotations

import json
import re
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .algorithms import AlgorithmConfig
from .errors import ConfigError, PushSumError
from .objectives import Objective, logistic_problem, make_quadratic
from .simulator import SimulationConfig
from .topology import MixingSchedule, load_matrix_csv


def _doc(text: str, default=MISSING, factory=MISSING):
    if factory is not MISSING:
        return field(default_factory=factory, metadata={"doc": text})
    return field(default=default, metadata={"doc": text})


@dataclass
class RunConfig:
    algorithm: str = _doc("sgp | osgp | sgp_momentum | dpsgd | allreduce_sgd | biased_osgp", "sgp")
    topology: str = _doc("one_peer_exponential | two_peer_exponential | undirected_bipartite_exponential"
                         " | dense_uniform | complete_cycling | static_custom", "one_peer_exponential")
    n: int = _doc("number of nodes", 8)
    static_matrix: str | None = _doc("CSV mixing matrix for topology=static_custom", None)
    iters: int = _doc("number of iterations K", 100)
    gamma: float | None = _doc("step-size; null means sqrt(n / K)", None)
    lr_schedule: list = _doc("step decays as [[iteration, factor], ...]", factory=list)
    tau: int = _doc("overlap delay bound (osgp, biased_osgp)", 0)
    osgp_cadence: str = _doc("dense: send every iteration; sparse: every tau iterations", "dense")
    delay_mode: str | None = _doc("none | fixed | uniform; null means fixed for overlap algorithms", None)
    momentum: float = _doc("momentum m in [0, 1) for sgp_momentum", 0.0)
    seed: int = _doc("seed for gradient noise, delays, stragglers and init", 0)
    init: str = _doc("zeros | common | random initial iterates", "zeros")
    init_scale: float = _doc("scale of random initial iterates", 1.0)
    record_every: int = _doc("record metrics every this many iterations", 1)
    objective: str = _doc("quadratic | logistic", "quadratic")
    dim: int = _doc("parameter dimension d", 10)
    samples: int = _doc("rows per node (quadratic m, logistic samples)", 40)
    heterogeneity: float = _doc("spread of local minimizers / node data shift", 0.0)
    noise: float = _doc("gradient noise standard deviation sigma", 0.0)
    batch_size: int | None = _doc("logistic mini-batch size; null means full local batch", None)
    reg: float = _doc("logistic L2 regularisation", 0.01)
    shared_curvature: bool = _doc("quadratic: one design matrix shared by all nodes", True)
    objective_seed: int | None = _doc("seed for problem data; null means seed", None)
    compute_time: float = _doc("seconds per gradient computation", 1.0)
    transfer_time: float = _doc("seconds per point-to-point message (also AllReduce latency)", 0.0)
    allreduce_beta: float = _doc("AllReduce cost per node: round = transfer_time + beta * n", 0.0)
    slowdown: list | dict = _doc("per-node compute multipliers: list of n values or {node: factor}",
                                 factory=list)
    spike_prob: float = _doc("per-node per-iteration probability of a compute spike", 0.0)
    spike_magnitude: float = _doc("extra compute fraction during a spike", 0.0)
    name: str = _doc("label used in comparison tables", "")

    # -- derived objects -----------------------------------------------------

    def schedule(self) -> MixingSchedule:
        if self.topology == "static_custom":
            if not self.static_matrix:
                raise ConfigError("topology=static_custom needs static_matrix")
            return MixingSchedule.from_matrix(load_matrix_csv(self.static_matrix))
        return MixingSchedule(self.topology, self.n)

    def algorithm_config(self) -> AlgorithmConfig:
        return AlgorithmConfig(kind=self.algorithm, schedule=self.schedule(), iters=self.iters,
                               gamma=self.gamma, tau=self.tau, momentum=self.momentum, seed=self.seed,
                               osgp_cadence=self.osgp_cadence, delay_mode=self.delay_mode,
                               lr_milestones=tuple(tuple(p) for p in self.lr_schedule), init=self.init,
                               init_scale=self.init_scale)

    def node_count(self) -> int:
        return self.schedule().n if self.topology == "static_custom" else self.n

    def slowdown_list(self) -> tuple:
        if isinstance(self.slowdown, dict):
            n = self.node_count()
            out = [1.0] * n
            for node, factor in self.slowdown.items():
                idx = int(node)
                if not 0 <= idx < n:
                    raise ConfigError(f"slowdown node {idx} outside [0, {n})")
                out[idx] = float(factor)
            return tuple(out)
        return tuple(float(v) for v in self.slowdown)

    def simulation_config(self) -> SimulationConfig:
        return SimulationConfig(self.algorithm_config(), compute_time=self.compute_time,
                                transfer_time=self.transfer_time, allreduce_beta=self.allreduce_beta,
                                slowdown=self.slowdown_list(), spike_prob=self.spike_prob,
                                spike_magnitude=self.spike_magnitude, record_every=self.record_every,
                                name=self.name)

    def build_objective(self) -> Objective:
        seed = self.seed if self.objective_seed is None else self.objective_seed
        if self.objective == "quadratic":
            return make_quadratic(self.node_count(), self.dim, self.samples, heterogeneity=self.heterogeneity,
                                  noise=self.noise, seed=seed, shared_curvature=self.shared_curvature)
        if self.objective == "logistic":
            return logistic_problem(self.node_count(), self.dim, self.samples, heterogeneity=self.heterogeneity,
                                    seed=seed, noise=self.noise, reg=self.reg, batch_size=self.batch_size)
        raise ConfigError(f"unknown objective {self.objective!r}")

    def resolved(self) -> dict:
        """Every key with defaults filled in and implicit choices made explicit."""
        out = asdict(self)
        alg = self.algorithm_config()
        out["gamma"] = alg.base_gamma
        out["delay_mode"] = alg.resolved_delay_mode
        out["objective_seed"] = self.seed if self.objective_seed is None else self.objective_seed
        out["slowdown"] = list(self.slowdown_list())
        if self.topology == "static_custom":
            out["static_matrix"] = str(Path(self.static_matrix).resolve())
            out["n"] = alg.n
        return out


FIELD_NAMES = [f.name for f in fields(RunConfig)]
_INT_KEYS = {"n", "iters", "tau", "seed", "record_every", "dim", "samples"}
_FLOAT_KEYS = {"momentum", "init_scale", "heterogeneity", "noise", "reg", "compute_time",
               "transfer_time", "allreduce_beta", "spike_prob", "spike_magnitude"}


def config_help() -> str:
    lines = ["config keys (default):"]
    for f in fields(RunConfig):
        default = f.default if f.default is not MISSING else f.default_factory()
        lines.append(f"  {f.name:<17} {f.metadata['doc']} ({json.dumps(default)})")
    return "\n".join(lines)


def _coerce(key: str, value, line: int | None, source: str | None):
    def bad(msg):
        return ConfigError(f"{key}: {msg}", line, source)

    if key in _INT_KEYS or key in ("batch_size", "objective_seed"):
        if value is None and key in ("batch_size", "objective_seed"):
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise bad(f"expected an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS or key == "gamma":
        if value is None and key == "gamma":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad(f"expected a number, got {value!r}")
        return float(value)
    if key == "shared_curvature":
        if not isinstance(value, bool):
            raise bad(f"expected true or false, got {value!r}")
        return value
    if key in ("lr_schedule",):
        if not isinstance(value, list) or any(not isinstance(p, list) or len(p) != 2 for p in value):
            raise bad("expected a list of [iteration, factor] pairs")
        return value
    if key == "slowdown":
        if not isinstance(value, (list, dict)):
            raise bad("expected a list or an object")
        return value
    if key in ("static_matrix", "delay_mode") and value is None:
        return None
    if not isinstance(value, str):
        raise bad(f"expected a string, got {value!r}")
    return value


def _strip_comment(line: str) -> str:
    quoted = False
    for pos, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:pos].strip()
    return line.strip()


def _parse_flat(text: str, source: str) -> tuple[dict, dict]:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw)
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, _, val = (part.strip() for part in stripped.partition("="))
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, source)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        values[key], lines[key] = parsed, lineno
    return values, lines


def _parse_json(text: str, source: str) -> tuple[dict, dict]:
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    if not isinstance(values, dict):
        raise ConfigError("top level must be an object", 1, source)
    lines = {}
    for key in values:
        m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
        lines[key] = text.count("\n", 0, m.start()) + 1 if m else None
    return values, lines


def parse_config(text: str, source: str = "<config>", json_format: bool | None = None) -> RunConfig:
    if json_format is None:
        json_format = text.lstrip().startswith("{")
    values, lines = (_parse_json if json_format else _parse_flat)(text, source)
    kwargs = {}
    for key, value in values.items():
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown key {key!r}", lines.get(key), source)
        kwargs[key] = _coerce(key, value, lines.get(key), source)
    if kwargs.get("static_matrix") and not Path(kwargs["static_matrix"]).is_absolute() and source != "<config>":
        kwargs["static_matrix"] = str(Path(source).parent / kwargs["static_matrix"])
    cfg = RunConfig(**kwargs)
    # build everything once so semantic errors surface here, anchored to a line
    try:
        cfg.simulation_config()
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line or _guess_line(exc.message, lines), source) from None
    except (PushSumError, ValueError, OSError) as exc:
        raise ConfigError(str(exc), _guess_line(str(exc), lines), source) from None
    return cfg


def _guess_line(message: str, lines: dict) -> int | None:
    for key, line in lines.items():
        if re.search(r"\b" + re.escape(key) + r"\b", message):
            return line
    return None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path), json_format=path.suffix == ".json" or None)
