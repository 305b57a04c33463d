"""Time the hot kernels under both backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once per backend (so numba compile time is excluded)
and both outputs are compared before timing.
"""

import argparse
import timeit

import numpy as np

from pushsum_sgp import _kernels
from pushsum_sgp.algorithms import AlgorithmConfig, run
from pushsum_sgp.objectives import make_quadratic
from pushsum_sgp.topology import MixingSchedule


def cases(rng):
    n = 64
    P = MixingSchedule("two_peer_exponential", n).matrix(1)
    X = rng.standard_normal((n, 256))
    recv = rng.integers(0, n, 3 * n)
    px, pw = rng.standard_normal((3 * n, 256)), rng.random(3 * n)
    offsets = rng.integers(1, 32, size=(500, 5, 32))
    obj = make_quadratic(16, 32, 40, heterogeneity=1.0, noise=0.5, seed=0)
    cfg = AlgorithmConfig("osgp", MixingSchedule("one_peer_exponential", 16), 200, gamma=0.05, tau=1)
    return {
        "gossip_mix 64x256": lambda: _kernels.gossip_mix(P, X),
        "deliver 192 msgs": lambda: _kernels.deliver(recv, px, pw, n),
        "one_peer_products 500x5 n=32": lambda: _kernels.one_peer_products(offsets),
        "osgp run n=16 K=200": lambda: run(cfg, obj).final_z,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    table = {}
    outputs = {}
    for flag in (False, True):
        _kernels.use_numba(flag)
        name = _kernels.backend()
        for label, fn in cases(np.random.default_rng(0)).items():
            outputs[(label, name)] = fn()
            number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            table.setdefault(label, {})[name] = best

    print(f"{'kernel':<32}{'numpy':>12}{'numba':>12}{'speedup':>10}  max |diff|")
    for label, t in table.items():
        a, b = outputs[(label, "numpy")], outputs[(label, "numba")]
        a, b = (np.concatenate([np.ravel(v) for v in x]) if isinstance(x, tuple) else x for x in (a, b))
        diff = float(np.max(np.abs(a - b)))
        print(f"{label:<32}{t['numpy'] * 1e3:>10.3f}ms{t['numba'] * 1e3:>10.3f}ms"
              f"{t['numpy'] / t['numba']:>9.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
