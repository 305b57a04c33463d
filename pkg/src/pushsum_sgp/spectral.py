"""Spectral analysis of mixing-matrix products.

``lambda2`` throughout is the squared second-largest singular value of the
ordered product ``P^(k0+w-1) ... P^(k0)``, i.e. the second eigenvalue of
``M^T M``. It is the factor in the squared-norm averaging bound
``sum_i ||y_i^(w) - y_bar||^2 <= lambda2 * sum_i ||y_i^(0) - y_bar||^2`` for
doubly-stochastic products; ``sigma2`` (the singular value itself) is reported
alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import FitWindowError
from .pushsum import NetworkState, gossip_step
from .topology import MixingSchedule, diameter, exponential_offsets, union_adjacency

RANDOM_SCHEMES = ("random_exponential_neighbor", "random_uniform_neighbor")


@dataclass(frozen=True)
class ProductAnalysis:
    window: int
    start: int
    lambda2: float
    sigma2: float
    singular_values: np.ndarray = field(repr=False)
    schedule: str = ""


@dataclass(frozen=True)
class ContractionEstimate:
    C_hat: float
    q_hat: float
    q_analytic: float
    C_analytic: float
    lam_analytic: float
    contracting: bool
    finite_time: bool
    max_out_degree: int
    B: int
    Delta: float
    tau: int
    deviations: np.ndarray = field(repr=False)


def ordered_product(schedule: MixingSchedule, start: int, window: int) -> np.ndarray:
    """``P^(start+window-1) @ ... @ P^(start)`` (newest on the left)."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    M = np.eye(schedule.n)
    for k in range(start, start + window):
        M = schedule.matrix(k) @ M
    return M


def analyze_product(schedule: MixingSchedule, start: int = 0, window: int = 1) -> ProductAnalysis:
    s = np.linalg.svd(ordered_product(schedule, start, window), compute_uv=False)
    sigma2 = float(s[1]) if s.shape[0] > 1 else 0.0
    return ProductAnalysis(window, start, sigma2 ** 2, sigma2, s, schedule.kind)


def lambda2_of_product(schedule: MixingSchedule, start: int = 0, window: int = 1) -> float:
    return analyze_product(schedule, start, window).lambda2


def random_offsets(scheme: str, n: int, window: int, trials: int, rng) -> np.ndarray:
    """Per-node hop draws, shape ``(trials, window, n)``, in trial-major order."""
    if scheme == "random_exponential_neighbor":
        hops = np.array(exponential_offsets(n))
        return hops[rng.integers(0, hops.shape[0], size=(trials, window, n))]
    if scheme == "random_uniform_neighbor":
        return rng.integers(1, n, size=(trials, window, n))
    raise ValueError(f"unknown random scheme {scheme!r}; expected one of {RANDOM_SCHEMES}")


def expected_lambda2_random(scheme: str, n: int, window: int, trials: int, seed: int = 0
                            ) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of ``lambda2`` when each node samples its peer."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    rng = np.random.default_rng(seed)
    products = _kernels.one_peer_products(random_offsets(scheme, n, window, trials, rng))
    s = np.linalg.svd(products, compute_uv=False)
    lam = s[:, 1] ** 2
    stderr = float(lam.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(lam.mean()), stderr


def averaging_error(schedule: MixingSchedule, y0, start: int = 0, window: int = 1) -> tuple[float, float]:
    """``(sum_i ||y_i^(w) - y_bar||^2, sum_i ||y_i^(0) - y_bar||^2)`` for plain gossip ``Y <- P Y``."""
    Y0 = np.array(y0, dtype=np.float64).reshape(schedule.n, -1)
    Y = ordered_product(schedule, start, window) @ Y0
    y_bar = Y0.mean(axis=0)
    return float(np.sum((Y - y_bar) ** 2)), float(np.sum((Y0 - y_bar) ** 2))


def analytic_contraction(n: int, max_out_degree: int, B: int, Delta: float, tau: int = 0, d: int = 1
                         ) -> tuple[float, float, float]:
    """Analytic consensus contraction bound ``(lambda, q, C)``.

    ``lambda = 1 - n D^-((tau+1) Delta B)``, ``q = lambda^(1/((tau+1) Delta B + 1))``;
    a disconnected union graph (``Delta = inf``) gives ``q = 1`` and no bound.
    """
    if not math.isfinite(Delta):
        return 1.0, 1.0, math.inf
    span = (tau + 1) * Delta * B
    lam = max(0.0, 1.0 - n * float(max_out_degree) ** (-span))
    q = lam ** (1.0 / (span + 1))
    C = 2.0 * math.sqrt(d) * float(max_out_degree) ** span / lam ** ((span + 2) / (span + 1)) if lam > 0 else math.inf
    return lam, q, C


def estimate_contraction(schedule: MixingSchedule, d: int = 1, iters: int | None = None, seed: int = 0,
                         tau: int = 0, floor: float = 1e-12) -> ContractionEstimate:
    """Fit ``max_i ||z_i - x_bar|| / max_i ||x_i(0)|| ~ C q^k`` on zero-gradient PushSum.

    Points at or below ``floor`` (relative to ``k = 0``) are excluded. A drop of
    more than six orders of magnitude in one step is finite-time exact
    consensus and reported as ``q_hat = 0``.
    """
    B = schedule.period
    iters = 40 * B if iters is None else iters
    if iters < 2 * B:
        raise FitWindowError(f"iters={iters} is shorter than two schedule periods ({2 * B}); increase iters")
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((schedule.n, d))
    x_bar = x0.mean(axis=0)
    net = NetworkState.from_vectors(x0)
    dev = np.empty(iters + 1)
    dev[0] = np.max(np.linalg.norm(net.z - x_bar, axis=1))
    for k in range(iters):
        net = gossip_step(net, schedule.matrix(k))
        dev[k + 1] = np.max(np.linalg.norm(net.z - x_bar, axis=1))
    r = dev / np.max(np.linalg.norm(x0, axis=1))

    below = np.flatnonzero(r <= floor * r[0])
    k_floor = int(below[0]) if below.size else iters + 1
    finite_time = k_floor <= iters and k_floor >= 1 and r[k_floor] <= 1e-6 * r[k_floor - 1]
    if finite_time:
        q_hat = 0.0
        C_hat = float(r[:k_floor].max())
    else:
        lo = min(B, k_floor // 2)
        ks = np.arange(lo, k_floor)
        if ks.size < 2:
            raise FitWindowError(f"deviation hit the numerical floor at k={k_floor} before a fit window "
                                 f"was available; reduce iters or use a slower-mixing schedule")
        slope, _ = np.polyfit(ks, np.log(r[ks]), 1)
        q_hat = float(min(math.exp(slope), 1.0))
        kk = np.arange(k_floor)
        C_hat = float(np.max(r[kk] / q_hat ** kk)) if q_hat > 0 else float(r[0])

    D = schedule.max_out_degree()
    Delta = diameter(union_adjacency(schedule, 0, B))
    lam, q, C = analytic_contraction(schedule.n, D, B, Delta, tau=tau, d=d)
    return ContractionEstimate(C_hat=C_hat, q_hat=q_hat, q_analytic=q, C_analytic=C, lam_analytic=lam,
                               contracting=q_hat < 1.0 - 1e-6, finite_time=bool(finite_time),
                               max_out_degree=D, B=B, Delta=Delta, tau=tau, deviations=dev)


def topology_report(kind: str, n: int, window: int, trials: int = 500, seed: int = 0, start: int = 0,
                    contraction_iters: int | None = None) -> dict:
    """JSON-ready summary used by the ``analyze-topology`` command."""
    report: dict = {"kind": kind, "n": n, "window": window, "start": start}
    if kind in RANDOM_SCHEMES:
        mean, stderr = expected_lambda2_random(kind, n, window, trials, seed)
        report.update(trials=trials, seed=seed, lambda2_mean=mean, lambda2_stderr=stderr)
        return report
    schedule = MixingSchedule(kind, n)
    pa = analyze_product(schedule, start, window)
    report.update(period=schedule.period, lambda2=pa.lambda2, sigma2=pa.sigma2,
                  singular_values=[float(v) for v in pa.singular_values])
    try:
        est = estimate_contraction(schedule, iters=contraction_iters, seed=seed)
    except FitWindowError as exc:
        report["contraction"] = {"error": str(exc)}
    else:
        report["contraction"] = {
            "q_hat": est.q_hat, "C_hat": est.C_hat, "q_analytic": est.q_analytic,
            "C_analytic": est.C_analytic if math.isfinite(est.C_analytic) else None,
            "contracting": est.contracting, "finite_time": est.finite_time,
            "max_out_degree": est.max_out_degree, "B": est.B,
            "Delta": est.Delta if math.isfinite(est.Delta) else None,
        }
    return report
