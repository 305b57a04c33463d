"""PushSum-based decentralized SGD: mixing schedules, delay model, optimizers,
spectral analysis and a straggler-aware simulator."""

from .algorithms import AlgorithmConfig, TrajectoryReport, run
from .config import RunConfig, load_config, parse_config
from .delay import DelaySampler, MessageBuffer, augment, run_pushsum_with_delays
from .errors import (ConfigError, DebiasDomainError, DelayBoundError, EmptyDatasetError, FitWindowError,
                     InvalidBaselineError, InvalidTopologyError, ProtocolError, PushSumError, ShapeError)
from .objectives import LogisticProblem, QuadraticProblem, logistic_problem, make_quadratic
from .pushsum import NetworkState, NodeState, debias, gossip_step, mix, run_pushsum
from .simulator import SimulationConfig, compare, simulate
from .spectral import analyze_product, estimate_contraction, expected_lambda2_random, lambda2_of_product
from .topology import MixingSchedule, make_schedule

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig", "TrajectoryReport", "run", "RunConfig", "load_config", "parse_config",
    "DelaySampler", "MessageBuffer", "augment", "run_pushsum_with_delays",
    "ConfigError", "DebiasDomainError", "DelayBoundError", "EmptyDatasetError", "FitWindowError",
    "InvalidBaselineError", "InvalidTopologyError", "ProtocolError", "PushSumError", "ShapeError",
    "LogisticProblem", "QuadraticProblem", "logistic_problem", "make_quadratic",
    "NetworkState", "NodeState", "debias", "gossip_step", "mix", "run_pushsum",
    "SimulationConfig", "compare", "simulate",
    "analyze_product", "estimate_contraction", "expected_lambda2_random", "lambda2_of_product",
    "MixingSchedule", "make_schedule",
]
