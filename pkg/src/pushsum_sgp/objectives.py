"""Synthetic stochastic objectives with controllable noise and heterogeneity.

The global objective is the node average ``f(x) = (1/n) sum_i f_i(x)``. Each
problem exposes exact local gradients plus a stochastic oracle that adds
zero-mean noise, so the gradient variance at every node is exactly the
configured ``noise_sigma ** 2`` (for the Gaussian-noise objectives).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import EmptyDatasetError, ShapeError


class Objective:
    """Base class: subclasses supply ``local_value`` and ``local_grad``."""

    kind = "abstract"
    n: int
    d: int
    noise_sigma: float = 0.0
    L: float | None = None
    x_star: np.ndarray | None = None

    def local_value(self, i: int, x) -> float:
        raise NotImplementedError

    def local_grad(self, i: int, x) -> np.ndarray:
        raise NotImplementedError

    def local_grads(self, X) -> np.ndarray:
        """Exact gradients of every ``f_i`` at row ``i`` of ``X``."""
        return np.stack([self.local_grad(i, X[i]) for i in range(self.n)])

    def value(self, x) -> float:
        return float(np.mean([self.local_value(i, x) for i in range(self.n)]))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.local_grads(np.broadcast_to(x, (self.n, self.d))).mean(axis=0)

    def _noise(self, rng) -> np.ndarray:
        return (self.noise_sigma / np.sqrt(self.d)) * rng.standard_normal(self.d)

    def stochastic_gradient(self, i: int, x, rng) -> np.ndarray:
        g = self.local_grad(i, x)
        if self.noise_sigma > 0.0:
            g = g + self._noise(rng)
        return g

    def stochastic_gradients(self, X, rngs) -> np.ndarray:
        """One stochastic gradient per node, node ``i`` drawing only from ``rngs[i]``."""
        G = self.local_grads(X)
        if self.noise_sigma > 0.0:
            G = G + np.stack([self._noise(rng) for rng in rngs])
        return G

    def heterogeneity_sq(self, x) -> float:
        """``(1/n) sum_i ||grad f_i(x) - grad f(x)||^2`` at a single point."""
        x = np.asarray(x, dtype=np.float64)
        G = self.local_grads(np.broadcast_to(x, (self.n, self.d)))
        return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


class ZeroObjective(Objective):
    """``f_i = 0``: turns every optimizer into pure PushSum averaging."""

    kind = "zero"

    def __init__(self, n: int, d: int):
        self.n, self.d = n, d
        self.L = 0.0

    def local_value(self, i, x):
        return 0.0

    def local_grad(self, i, x):
        return np.zeros(self.d)

    def local_grads(self, X):
        return np.zeros((self.n, self.d))


class LinearObjective(Objective):
    """``f_i(x) = g_i . x``, a constant-gradient objective used in recursion checks."""

    kind = "linear"

    def __init__(self, slopes):
        self.slopes = np.array(slopes, dtype=np.float64, ndmin=2)
        self.n, self.d = self.slopes.shape
        self.L = 0.0

    def local_value(self, i, x):
        return float(self.slopes[i] @ np.asarray(x, dtype=np.float64))

    def local_grad(self, i, x):
        return self.slopes[i].copy()

    def local_grads(self, X):
        return self.slopes.copy()


class QuadraticProblem(Objective):
    """``f_i(x) = 1/2 ||A_i x - b_i||^2 + ridge/2 ||x||^2`` with additive Gaussian gradient noise."""

    kind = "quadratic"

    def __init__(self, A, b, noise_sigma: float = 0.0, ridge: float = 0.0, heterogeneity: float = 0.0):
        self.A = np.array(A, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        if self.A.ndim != 3 or self.b.shape != self.A.shape[:2]:
            raise ShapeError(f"expected A (n, m, d) and b (n, m), got {self.A.shape} and {self.b.shape}")
        self.n, self.m, self.d = self.A.shape
        self.noise_sigma = float(noise_sigma)
        self.heterogeneity = float(heterogeneity)
        self.ridge = float(ridge)
        H = np.einsum("imd,ime->ide", self.A, self.A)
        if self.ridge == 0.0 and np.linalg.matrix_rank(H.sum(axis=0)) < self.d:
            self.ridge = 1e-8
        self._H = H + self.ridge * np.eye(self.d)
        self._Atb = np.einsum("imd,im->id", self.A, self.b)
        self.L = float(max(np.linalg.eigvalsh(h)[-1] for h in self._H))
        self.x_star = np.linalg.solve(self._H.sum(axis=0), self._Atb.sum(axis=0))

    def local_value(self, i, x):
        x = np.asarray(x, dtype=np.float64)
        r = self.A[i] @ x - self.b[i]
        return 0.5 * float(r @ r) + 0.5 * self.ridge * float(x @ x)

    def local_grad(self, i, x):
        return self._H[i] @ np.asarray(x, dtype=np.float64) - self._Atb[i]

    def local_grads(self, X):
        return np.einsum("ide,ie->id", self._H, X) - self._Atb

    def local_minimizer(self, i: int) -> np.ndarray:
        return np.linalg.solve(self._H[i], self._Atb[i])


def make_quadratic(n: int, d: int, m: int, heterogeneity: float = 0.0, noise: float = 0.0,
                   seed: int = 0, shared_curvature: bool = True) -> QuadraticProblem:
    """Seeded least-squares problem whose local minimizers are spread by ``heterogeneity``.

    Rows of ``A`` are ``N(0, 1/m)`` so ``A^T A`` is close to the identity. Node ``i``
    targets ``x_true + heterogeneity * u_i``; with ``shared_curvature`` all nodes share
    one design matrix, which makes ``grad f_i - grad f`` constant in ``x`` and
    ``heterogeneity = 0`` give identical local problems.
    """
    if min(n, d, m) < 1:
        raise ValueError(f"n, d, m must be >= 1, got {(n, d, m)}")
    if heterogeneity < 0 or noise < 0:
        raise ValueError("heterogeneity and noise must be non-negative")
    rng = np.random.default_rng(seed)
    if shared_curvature:
        A = np.broadcast_to(rng.standard_normal((m, d)) / np.sqrt(m), (n, m, d)).copy()
    else:
        A = rng.standard_normal((n, m, d)) / np.sqrt(m)
    x_true = rng.standard_normal(d)
    targets = x_true + heterogeneity * rng.standard_normal((n, d))
    b = np.einsum("imd,id->im", A, targets)
    return QuadraticProblem(A, b, noise_sigma=noise, heterogeneity=heterogeneity)


class LogisticProblem(Objective):
    """L2-regularised logistic loss on per-node labelled samples.

    Stochastic gradients subsample ``batch_size`` rows without replacement when
    set, and add Gaussian noise of total variance ``noise_sigma ** 2`` on top.
    """

    kind = "logistic"

    def __init__(self, features, labels, reg: float = 1e-2, noise_sigma: float = 0.0,
                 batch_size: int | None = None, heterogeneity: float = 0.0,
                 oracle_steps: int = 100_000):
        self.features = np.array(features, dtype=np.float64)
        self.labels = np.array(labels, dtype=np.float64)
        if self.features.ndim != 3 or self.labels.shape != self.features.shape[:2]:
            raise ShapeError("expected features (n, s, d) and labels (n, s)")
        self.n, self.s, self.d = self.features.shape
        if self.s == 0:
            raise EmptyDatasetError("every node needs at least one sample")
        self.reg = float(reg)
        self.noise_sigma = float(noise_sigma)
        self.batch_size = batch_size
        self.heterogeneity = float(heterogeneity)
        gram = np.einsum("isd,ise->ide", self.features, self.features)
        self.L = float(max(np.linalg.eigvalsh(g)[-1] for g in gram) / (4 * self.s) + self.reg)
        self._L_global = float(np.linalg.eigvalsh(gram.sum(axis=0))[-1] / (4 * self.n * self.s) + self.reg)
        self.x_star, self.oracle_steps = self._centralized_oracle(oracle_steps)
        self.f_star = self.value(self.x_star)

    def _grad_rows(self, a, y, x):
        margin = y * (a @ x)
        return -(a * (y * expit(-margin))[:, None]).mean(axis=0) + self.reg * x

    def local_value(self, i, x):
        x = np.asarray(x, dtype=np.float64)
        margin = self.labels[i] * (self.features[i] @ x)
        return float(np.mean(np.logaddexp(0.0, -margin)) + 0.5 * self.reg * (x @ x))

    def local_grad(self, i, x):
        return self._grad_rows(self.features[i], self.labels[i], np.asarray(x, dtype=np.float64))

    def local_grads(self, X):
        margin = self.labels * np.einsum("isd,id->is", self.features, X)
        coef = self.labels * expit(-margin)
        return -np.einsum("isd,is->id", self.features, coef) / self.s + self.reg * X

    def stochastic_gradient(self, i, x, rng):
        x = np.asarray(x, dtype=np.float64)
        if self.batch_size:
            rows = rng.choice(self.s, size=min(self.batch_size, self.s), replace=False)
            g = self._grad_rows(self.features[i, rows], self.labels[i, rows], x)
        else:
            g = self.local_grad(i, x)
        if self.noise_sigma > 0.0:
            g = g + self._noise(rng)
        return g

    def stochastic_gradients(self, X, rngs):
        if self.batch_size:
            return np.stack([self.stochastic_gradient(i, X[i], rngs[i]) for i in range(self.n)])
        return super().stochastic_gradients(X, rngs)

    def _centralized_oracle(self, max_steps: int, tol: float = 1e-12):
        x = np.zeros(self.d)
        step = 1.0 / self._L_global
        for t in range(max_steps):
            g = self.grad(x)
            if np.linalg.norm(g) <= tol:
                return x, t
            x = x - step * g
        return x, max_steps


def logistic_problem(n: int, d: int, samples: int, heterogeneity: float = 0.0, seed: int = 0,
                     noise: float = 0.0, reg: float = 1e-2, batch_size: int | None = None,
                     oracle_steps: int = 100_000) -> LogisticProblem:
    """Two-class Gaussian mixture split across nodes; ``heterogeneity`` shifts each node's data."""
    if samples < 1:
        raise EmptyDatasetError(f"samples per node must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    mean = 2.0 * rng.standard_normal(d) / np.sqrt(d)
    shifts = heterogeneity * rng.standard_normal((n, d))
    labels = rng.choice([-1.0, 1.0], size=(n, samples))
    features = labels[..., None] * mean + shifts[:, None, :] + rng.standard_normal((n, samples, d))
    return LogisticProblem(features, labels, reg=reg, noise_sigma=noise, batch_size=batch_size,
                           heterogeneity=heterogeneity, oracle_steps=oracle_steps)


def finite_difference_check(obj: Objective, node: int, x, h: float = 1e-5) -> float:
    """Max coordinate gap between the analytic ``grad f_i`` and central differences."""
    x = np.array(x, dtype=np.float64)
    fd = np.empty(obj.d)
    for c in range(obj.d):
        e = np.zeros(obj.d)
        e[c] = h
        fd[c] = (obj.local_value(node, x + e) - obj.local_value(node, x - e)) / (2 * h)
    return float(np.max(np.abs(fd - obj.local_grad(node, x)), initial=0.0))


# ---------------------------------------------------------------------------
# portable serialisation: CSV matrices plus a JSON manifest


def save_problem(obj: Objective, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"kind": obj.kind, "n": obj.n, "d": obj.d, "noise_sigma": obj.noise_sigma,
                "L": obj.L, "heterogeneity": getattr(obj, "heterogeneity", 0.0)}
    if isinstance(obj, QuadraticProblem):
        manifest.update(m=obj.m, ridge=obj.ridge)
        for i in range(obj.n):
            np.savetxt(out / f"A_{i}.csv", obj.A[i], delimiter=",", fmt="%.17g")
            np.savetxt(out / f"b_{i}.csv", obj.b[i][None], delimiter=",", fmt="%.17g")
    elif isinstance(obj, LogisticProblem):
        manifest.update(samples=obj.s, reg=obj.reg, batch_size=obj.batch_size,
                        oracle_steps=obj.oracle_steps)
        for i in range(obj.n):
            np.savetxt(out / f"features_{i}.csv", obj.features[i], delimiter=",", fmt="%.17g")
            np.savetxt(out / f"labels_{i}.csv", obj.labels[i][None], delimiter=",", fmt="%.17g")
    else:
        raise TypeError(f"cannot serialise objective of kind {obj.kind!r}")
    np.savetxt(out / "x_star.csv", obj.x_star[None], delimiter=",", fmt="%.17g")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_problem(directory) -> Objective:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())

    def read(name, rows):
        return np.loadtxt(src / name, delimiter=",", dtype=np.float64, ndmin=2).reshape(rows)

    n, d = manifest["n"], manifest["d"]
    if manifest["kind"] == "quadratic":
        m = manifest["m"]
        A = np.stack([read(f"A_{i}.csv", (m, d)) for i in range(n)])
        b = np.stack([read(f"b_{i}.csv", (m,)) for i in range(n)])
        return QuadraticProblem(A, b, noise_sigma=manifest["noise_sigma"], ridge=manifest["ridge"],
                                heterogeneity=manifest["heterogeneity"])
    if manifest["kind"] == "logistic":
        s = manifest["samples"]
        features = np.stack([read(f"features_{i}.csv", (s, d)) for i in range(n)])
        labels = np.stack([read(f"labels_{i}.csv", (s,)) for i in range(n)])
        return LogisticProblem(features, labels, reg=manifest["reg"],
                               noise_sigma=manifest["noise_sigma"], batch_size=manifest["batch_size"],
                               heterogeneity=manifest["heterogeneity"],
                               oracle_steps=manifest["oracle_steps"])
    raise ValueError(f"unknown problem kind {manifest['kind']!r}")
