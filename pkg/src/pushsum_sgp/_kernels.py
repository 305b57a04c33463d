"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is picked at import time: numba when it imports cleanly and the
environment variable ``PUSHSUM_SGP_NUMBA`` is not set to ``0``/``false``/``off``.
:func:`use_numba` switches at runtime (benchmarks and the equivalence tests use it).

Both paths accumulate in the same fixed order (ascending sender, then message
order), so for the gossip and delivery kernels they are bit-identical on IEEE
doubles; tests still compare them at 1e-12 to stay robust to compiler changes.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

ENV_FLAG = "PUSHSUM_SGP_NUMBA"


def _env_wants_numba() -> bool:
    return os.environ.get(ENV_FLAG, "1").strip().lower() not in {"0", "false", "off", "no"}


# ---------------------------------------------------------------------------
# pure numpy


def _gossip_mix_numpy(P, X):
    n = P.shape[0]
    out = np.zeros((n, X.shape[1]))
    for i in range(n):
        col = P[:, i]
        rows = np.flatnonzero(col)
        out[rows] += col[rows, None] * X[i]
    return out


def _deliver_numpy(receivers, payload_x, payload_w, n):
    acc_x = np.zeros((n, payload_x.shape[1]))
    acc_w = np.zeros(n)
    # np.add.at is unbuffered and walks indices in order, like the scalar loop
    np.add.at(acc_x, receivers, payload_x)
    np.add.at(acc_w, receivers, payload_w)
    return acc_x, acc_w


def _one_peer_products_numpy(offsets):
    trials, window, n = offsets.shape
    out = np.empty((trials, n, n))
    idx = np.arange(n)
    for t in range(trials):
        M = np.eye(n)
        for s in range(window):
            new = 0.5 * M
            np.add.at(new, (idx + offsets[t, s]) % n, 0.5 * M)
            M = new
        out[t] = M
    return out


# ---------------------------------------------------------------------------
# numba

if HAVE_NUMBA:

    @njit(cache=True)
    def _gossip_mix_numba(P, X):
        n = P.shape[0]
        d = X.shape[1]
        out = np.zeros((n, d))
        for i in range(n):
            for j in range(n):
                p = P[j, i]
                if p != 0.0:
                    for c in range(d):
                        out[j, c] += p * X[i, c]
        return out

    @njit(cache=True)
    def _deliver_numba(receivers, payload_x, payload_w, n):
        d = payload_x.shape[1]
        acc_x = np.zeros((n, d))
        acc_w = np.zeros(n)
        for m in range(receivers.shape[0]):
            r = receivers[m]
            for c in range(d):
                acc_x[r, c] += payload_x[m, c]
            acc_w[r] += payload_w[m]
        return acc_x, acc_w

    @njit(cache=True)
    def _one_peer_products_numba(offsets):
        trials, window, n = offsets.shape
        out = np.empty((trials, n, n))
        for t in range(trials):
            M = np.eye(n)
            for s in range(window):
                new = 0.5 * M
                for i in range(n):
                    j = (i + offsets[t, s, i]) % n
                    for c in range(n):
                        new[j, c] += 0.5 * M[i, c]
                M = new
            out[t] = M
        return out


_NUMPY_IMPL = {
    "gossip_mix": _gossip_mix_numpy,
    "deliver": _deliver_numpy,
    "one_peer_products": _one_peer_products_numpy,
}
_NUMBA_IMPL = (
    {
        "gossip_mix": _gossip_mix_numba,
        "deliver": _deliver_numba,
        "one_peer_products": _one_peer_products_numba,
    }
    if HAVE_NUMBA
    else None
)

_active = _NUMBA_IMPL if (HAVE_NUMBA and _env_wants_numba()) else _NUMPY_IMPL


def use_numba(enabled: bool = True) -> None:
    """Select the kernel backend; raises if numba was requested but is missing."""
    global _active
    if enabled and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable in this environment")
    _active = _NUMBA_IMPL if enabled else _NUMPY_IMPL


def backend() -> str:
    return "numba" if _active is _NUMBA_IMPL else "numpy"


def gossip_mix(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Return ``P @ X`` summed over senders in ascending order, skipping zero weights."""
    return _active["gossip_mix"](np.ascontiguousarray(P, dtype=np.float64),
                                 np.ascontiguousarray(X, dtype=np.float64))


def deliver(receivers: np.ndarray, payload_x: np.ndarray, payload_w: np.ndarray, n: int):
    """Sum message payloads into their receivers, in the order given."""
    return _active["deliver"](np.ascontiguousarray(receivers, dtype=np.int64),
                              np.ascontiguousarray(payload_x, dtype=np.float64),
                              np.ascontiguousarray(payload_w, dtype=np.float64), int(n))


def one_peer_products(offsets: np.ndarray) -> np.ndarray:
    """Ordered products of one-peer (1/2, 1/2) push matrices.

    ``offsets[t, s, i]`` is the hop node ``i`` sends to at step ``s`` of trial ``t``;
    returns the ``(trials, n, n)`` stack of ``P[window-1] @ ... @ P[0]``.
    """
    return _active["one_peer_products"](np.ascontiguousarray(offsets, dtype=np.int64))
