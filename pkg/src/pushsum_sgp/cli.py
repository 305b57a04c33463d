"""``pushsum-sgp`` command line.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 divergence
(a non-finite value showed up in the metrics).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, config_help, load_config
from .errors import ConfigError, PushSumError
from .metrics import write_csv, write_jsonl
from .pushsum import run_pushsum
from .simulator import simulate
from .spectral import RANDOM_SCHEMES, topology_report
from .topology import KINDS as TOPOLOGY_KINDS, make_schedule

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("pushsum_sgp")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def execute(cfg: RunConfig, out: Path) -> int:
    """Run one resolved configuration into ``out``; returns the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    sim = cfg.simulation_config()
    report = simulate(sim, cfg.build_objective())
    write_csv(report.records, out / "metrics.csv")
    write_jsonl(report.records, out / "metrics.jsonl")
    _dump({
        "iterations": report.records[-1].iteration,
        "diverged": report.diverged,
        "z": report.final_z.tolist(),
        "w": report.final_w.tolist(),
        "x_bar": report.x_bar.tolist(),
    }, out / "final_state.json")
    _dump(cfg.resolved(), out / "resolved_config.json")
    if report.diverged:
        log.error("diverged at iteration %d", report.records[-1].iteration)
        return EXIT_DIVERGED
    last = report.records[-1]
    log.info("done: f=%.6g |grad|^2=%.3g consensus=%.3g sim_time=%.6g",
             last.f_mean, last.grad_norm_sq, last.consensus_err, last.sim_time)
    return EXIT_OK


def _run_seed(args) -> int:
    cfg, out = args
    return execute(cfg, out)


def cmd_run(ns) -> int:
    cfg = load_config(ns.config)
    out = Path(ns.out)
    if ns.seeds:
        seeds = [int(s) for s in ns.seeds.split(",") if s.strip()]
        jobs = []
        for s in seeds:
            c = RunConfig(**{**cfg.__dict__, "seed": s})
            jobs.append((c, out / f"seed_{s}"))
        if ns.jobs > 1:
            with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
                codes = list(pool.map(_run_seed, jobs))
        else:
            codes = [_run_seed(j) for j in jobs]
        return max(codes)
    if ns.seed is not None:
        cfg = RunConfig(**{**cfg.__dict__, "seed": ns.seed})
    return execute(cfg, out)


def cmd_average(ns) -> int:
    try:
        y0 = np.loadtxt(ns.input, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read input vectors: {exc}", None, ns.input) from None
    schedule = make_schedule(ns.topology, ns.n)
    if y0.shape[0] != schedule.n:
        raise ConfigError(f"input has {y0.shape[0]} rows but the topology has {schedule.n} nodes",
                          None, ns.input)
    if ns.iters < 0:
        raise ConfigError(f"--iters must be >= 0, got {ns.iters}", None, "average")
    z = run_pushsum(y0, schedule, ns.iters)
    mean = y0.mean(axis=0)
    for row in z:
        print(",".join(format(v, ".17g") for v in row))
    dev = float(np.max(np.abs(z - mean))) if z.size else 0.0
    print(f"max_deviation={dev:.17g}")
    return EXIT_OK


def cmd_analyze(ns) -> int:
    if ns.kind not in TOPOLOGY_KINDS and ns.kind not in RANDOM_SCHEMES:
        raise ConfigError(f"unknown kind {ns.kind!r}; expected one of {TOPOLOGY_KINDS + RANDOM_SCHEMES}",
                          None, "analyze-topology")
    report = topology_report(ns.kind, ns.n, ns.window, trials=ns.trials, seed=ns.seed, start=ns.start,
                             contraction_iters=ns.contraction_iters)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_compare(ns) -> int:
    import csv

    rows = []
    for path in ns.configs:
        cfg = load_config(path)
        report = simulate(cfg.simulation_config(), cfg.build_objective())
        last = report.records[-1]
        rows.append({"name": cfg.name or Path(path).stem, "algorithm": cfg.algorithm,
                     "topology": cfg.topology, "iters": cfg.iters, "f_mean": last.f_mean,
                     "grad_norm_sq": last.grad_norm_sq, "consensus_err": last.consensus_err,
                     "sim_time": last.sim_time, "diverged": report.diverged})
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pushsum-sgp", description="PushSum decentralized SGD simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file",
                       formatter_class=argparse.RawDescriptionHelpFormatter, epilog=config_help())
    r.add_argument("config", help="config file (flat 'key = value' or .json)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--seeds", default=None, help="comma-separated seeds; each runs into OUT/seed_<s>")
    r.add_argument("--jobs", type=int, default=1, help="parallel processes for --seeds (default 1)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("average", help="plain PushSum averaging of input vectors")
    a.add_argument("--n", type=int, required=True, help="number of nodes")
    a.add_argument("--topology", default="one_peer_exponential",
                   help="schedule kind or static:<csv> (default one_peer_exponential)")
    a.add_argument("--iters", type=int, required=True, help="gossip iterations")
    a.add_argument("--input", required=True, help="CSV with one row per node")
    a.set_defaults(func=cmd_average)

    t = sub.add_parser("analyze-topology", help="spectral report for a schedule or random scheme")
    t.add_argument("--kind", required=True, help=f"one of {', '.join(TOPOLOGY_KINDS + RANDOM_SCHEMES)}")
    t.add_argument("--n", type=int, required=True, help="number of nodes")
    t.add_argument("--window", type=int, default=1, help="product length (default 1)")
    t.add_argument("--trials", type=int, default=500, help="Monte-Carlo trials for random schemes (default 500)")
    t.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    t.add_argument("--start", type=int, default=0, help="first iteration of the product (default 0)")
    t.add_argument("--contraction-iters", type=int, default=None,
                   help="iterations for the contraction fit (default 40 periods)")
    t.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", help="run several configs and print a CSV summary table")
    c.add_argument("configs", nargs="+", help="config files")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PushSumError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
