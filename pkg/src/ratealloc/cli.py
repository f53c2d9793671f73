"""Command-line front end: ``ratealloc <command> --config FILE``.

Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as configmod
from . import io
from .errors import ConfigError
from .markov import (
    AllocationChain,
    evolve,
    mixing_time_bound,
    offered_service,
    stationary,
    tv_distance,
    uniformize,
)
from .optimizer import ProgramSpec, solve_vstar
from .sim import run
from .whitespace import schedule_masks

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def bundled_scenarios():
    root = resources.files("ratealloc") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config(name):
    """A file path, or the name of a bundled scenario."""
    p = Path(name)
    if p.exists():
        return p
    stem = name[:-5] if name.endswith(".yaml") else name
    candidate = resources.files("ratealloc") / "scenarios" / f"{stem}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"no such config file or bundled scenario: {name}")


def load_scenario(args):
    sc = configmod.load(resolve_config(args.config))
    if args.seed is not None:
        sc.seed = args.seed
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ConfigError("horizon must be positive", path="--horizon")
        sc.horizon = args.horizon
    if args.replications is not None:
        if args.replications < 1:
            raise ConfigError("replications must be positive", path="--replications")
        sc.replications = args.replications
    if args.rho is not None:
        if not 0 < args.rho < 1:
            raise ConfigError("rho must lie in (0, 1)", path="--rho")
        sc.rho = args.rho
    return sc


def _outdir(args, sc):
    out = args.out or sc.output
    if out is None:
        return None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj):
    print(json.dumps(io._plain(obj), indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# commands


def _one_replication(sc, seed):
    trace = run(sc.build_sim(), sc.horizon, seed)
    return seed, trace


def cmd_simulate(args):
    sc = load_scenario(args)
    out = _outdir(args, sc)
    seeds = [sc.seed + k for k in range(sc.replications)]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_one_replication, [sc] * len(seeds), seeds))
    else:
        results = [_one_replication(sc, s) for s in seeds]
    per_seed = {}
    sigma = schedule_masks(sc.build_space()) if sc.is_whitespace else None
    for seed, trace in results:
        per_seed[str(seed)] = trace.summary
        if out is not None:
            io.write_trace_csv(out / f"trace_seed{seed}.csv", trace, sigma=sigma)
    summaries = list(per_seed.values())
    report = {
        "scenario": sc.name,
        "horizon": sc.horizon,
        "seeds": per_seed,
        "aggregate": {
            "max_queue_slope": max(s["max_queue_slope"] for s in summaries),
            "min_sum_queue_slope": min(s["sum_queue_slope"] for s in summaries),
            "mean_throughput": np.mean([s["throughput"] for s in summaries], axis=0).tolist(),
            "max_conservation_error": max(s["conservation_error"] for s in summaries),
        },
    }
    if out is not None:
        io.write_json(out / "summary.json", report)
    _emit(report)
    return EXIT_OK


def _chain(sc):
    if sc.is_whitespace:
        return AllocationChain(sc.build_space(), sc.analysis_v())
    return AllocationChain.from_grid(sc.build_grid(), sc.analysis_v())


def cmd_stationary(args):
    sc = load_scenario(args)
    chain = _chain(sc)
    pi = stationary(chain)
    extra = None
    if sc.is_whitespace:
        masks = schedule_masks(chain.space)
        extra = {f"sigma_{i}": masks[:, i].tolist() for i in range(chain.n)}
    out = _outdir(args, sc)
    if out is not None:
        io.write_distribution_csv(out / "stationary.csv", chain.vectors, pi, extra)
    else:
        io.write_distribution_csv(sys.stdout, chain.vectors, pi, extra)
    return EXIT_OK


def cmd_solve_vstar(args):
    sc = load_scenario(args)
    lam = np.asarray(sc.lam, dtype=float) if sc.lam is not None else sc.arrival_rates()
    report = solve_vstar(ProgramSpec(sc.build_grid(), lam, sc.epsilon_shift))
    d = report.to_dict()
    d["lam"] = lam.tolist()
    out = _outdir(args, sc)
    if out is not None:
        io.write_json(out / "vstar.json", d)
    _emit(d)
    return EXIT_OK


def mixing_report(chain, rho):
    dtmc = uniformize(chain)
    bound = mixing_time_bound(dtmc, rho)
    d = {"v": chain.v.tolist(), "rho": rho, "A": dtmc.A, "states": chain.size, "step_bound": bound}
    if chain.size <= 256:
        steps = int(math.ceil(bound))
        pi = stationary(chain)
        worst = 0.0
        for k in range(chain.size):
            mu0 = np.zeros(chain.size)
            mu0[k] = 1.0
            worst = max(worst, tv_distance(evolve(dtmc.P, mu0, steps), pi))
        d["checked_steps"] = steps
        d["worst_tv_at_bound"] = worst
        d["check_passed"] = bool(worst <= rho)
    return d


def cmd_mixing(args):
    sc = load_scenario(args)
    d = mixing_report(_chain(sc), sc.rho)
    out = _outdir(args, sc)
    if out is not None:
        io.write_json(out / "mixing.json", d)
    _emit(d)
    return EXIT_OK


def cmd_whitespace(args):
    sc = load_scenario(args)
    if not sc.is_whitespace:
        raise ConfigError("the whitespace command needs a 'network' scenario", path="network")
    chain = _chain(sc)
    pi = stationary(chain)
    masks = schedule_masks(chain.space)
    d = {
        "links": chain.n,
        "bands": len(sc.network["bandwidths"]),
        "schedules": chain.size,
        "v": chain.v.tolist(),
        "offered_service": offered_service(chain, pi).tolist(),
    }
    out = _outdir(args, sc)
    if out is not None:
        extra = {f"sigma_{i}": masks[:, i].tolist() for i in range(chain.n)}
        io.write_distribution_csv(out / "whitespace_stationary.csv", chain.vectors, pi, extra)
        io.write_json(out / "whitespace.json", d)
    _emit(d)
    return EXIT_OK


def cmd_validate(args):
    sc = load_scenario(args)
    sys.stdout.write(sc.dump())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "stationary": cmd_stationary,
    "solve-vstar": cmd_solve_vstar,
    "mixing": cmd_mixing,
    "whitespace": cmd_whitespace,
    "validate": cmd_validate,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario YAML or bundled scenario name")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--replications", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--rho", type=float, default=None, help="TV target for mixing")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    parser = argparse.ArgumentParser(prog="ratealloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
