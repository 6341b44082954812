"""Command-line front end: every sweep is written as a CSV table.

Each file starts with '#' lines echoing the full configuration, followed by a
header row and one record per grid point in grid order. Reals are written with
15 significant digits.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .boundary_search import (
    DEFAULT_MAX_STEPS,
    INDETERMINATE,
    BoundaryNotFound,
    c_crit,
    lambda_crit,
)
from .es_core import AlgoParams
from .markov_lab import (
    C1_CHAIN,
    CONSTANT_SIGMA,
    CSA,
    DEFAULT_BURNIN,
    DEFAULT_STEPS,
    FULL_SIGMA,
    ChainSpec,
    csa_rate,
    estimate,
    progress_rate,
    sphere_mean_log_eta,
)
from .problem import ProblemGeometry
from .scalar_math import NumericError

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("progress-rate", "stationary-delta", "csa-rate", "sphere", "lambda-crit", "c-crit",
            "verify")
DEFAULT_THETAS = tuple(float(t) for t in np.logspace(math.log10(0.01), math.log10(1.55), 30))
SPHERE_STEPS = 10**4
SPHERE_REPLICATES = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.15g" % v
    return str(v)


def _list_of(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _flatten(groups):
    return None if groups is None else [v for g in groups for v in g]


@dataclass
class RunConfig:
    command: str
    thetas: list[float]
    lambdas: list[int]
    cs: list[float]
    d_sigmas: list[float]
    n: int
    steps: int
    burnin: int
    seed: int
    jobs: int = 1
    out: Optional[str] = None
    mode: Optional[str] = None
    replicates: int = 1
    bound: Optional[float] = None
    trace: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        for name in ("thetas", "lambdas", "cs", "d_sigmas"):
            if not getattr(self, name):
                raise UsageError(f"{name} must not be empty")
        for t in self.thetas:
            if not 0.0 < t < math.pi / 2:
                raise UsageError(f"theta must lie in (0, pi/2), got {t}")
        if any(lam < 1 for lam in self.lambdas):
            raise UsageError("lambda must be >= 1")
        if any(not 0.0 < c <= 1.0 for c in self.cs):
            raise UsageError("c must lie in (0, 1]")
        if any(not d > 0.0 for d in self.d_sigmas):
            raise UsageError("dsigma must be > 0")
        if self.n < 2:
            raise UsageError("n must be >= 2")
        if self.steps < 1 or self.burnin < 0:
            raise UsageError("steps must be >= 1 and burnin >= 0")
        if self.jobs < 1 or self.replicates < 1:
            raise UsageError("jobs and replicates must be >= 1")
        if self.bound is not None and not self.bound > 0:
            raise UsageError("bound must be > 0")

    def comment_lines(self) -> list[str]:
        cfg = asdict(self)
        cfg.pop("extra")
        cfg.update(self.extra)
        lines = [f"# resampling_es {__version__}"]
        for key, value in cfg.items():
            if isinstance(value, (list, tuple)):
                value = " ".join(_fmt(v) for v in value)
            lines.append(f"# {key}: {_fmt(value)}")
        return lines


def point_seed(seed: int, index: int) -> int:
    """Seed of grid point ``index``: an independent stream derived from the master seed."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(index),)).generate_state(1)[0])


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1:
        return [fn(i, it) for i, it in enumerate(items)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(len(items)), items))


def render_csv(comments: list[str], header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path: Optional[str]):
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _burnin(cfg: RunConfig) -> int:
    if cfg.steps <= cfg.burnin:
        raise UsageError(f"steps ({cfg.steps}) must exceed burnin ({cfg.burnin})")
    return cfg.burnin


def cmd_progress_rate(cfg: RunConfig):
    burnin = _burnin(cfg)
    grid = [(t, lam) for lam in cfg.lambdas for t in cfg.thetas]

    def one(i, point):
        theta, lam = point
        s = point_seed(cfg.seed, i)
        r = progress_rate(ProblemGeometry(theta), lam, 1.0, cfg.steps, s, burnin)
        return [theta, lam, r.mean, r.mean / lam, r.stderr, cfg.steps, s]

    header = ["theta", "lambda", "phi_star", "phi_star_over_lambda", "stderr", "steps", "seed"]
    return header, _map(one, grid, cfg.jobs)


def cmd_stationary_delta(cfg: RunConfig):
    burnin = _burnin(cfg)
    mode = cfg.mode or CONSTANT_SIGMA
    if mode not in (CONSTANT_SIGMA, CSA):
        raise UsageError(f"stationary-delta mode must be {CONSTANT_SIGMA} or {CSA}")
    if mode == CONSTANT_SIGMA:
        grid = [(t, lam, None, None) for lam in cfg.lambdas for t in cfg.thetas]
    else:
        grid = [(t, lam, c, d) for lam in cfg.lambdas for c in cfg.cs for d in cfg.d_sigmas
                for t in cfg.thetas]

    def one(i, point):
        theta, lam, c, d = point
        s = point_seed(cfg.seed, i)
        params = AlgoParams(lam=lam) if c is None else AlgoParams(lam=lam, c=c, d_sigma=d)
        r = estimate(ChainSpec(mode, ProblemGeometry(theta, cfg.n), params), "delta",
                     cfg.steps, burnin, s)
        return [mode, theta, lam, c, d, r.mean, r.stderr, cfg.steps, s, r.flag]

    header = ["mode", "theta", "lambda", "c", "d_sigma", "mean_delta", "stderr", "steps",
              "seed", "flag"]
    return header, _map(one, grid, cfg.jobs)


def cmd_csa_rate(cfg: RunConfig):
    burnin = _burnin(cfg)
    mode = cfg.mode or FULL_SIGMA
    if mode not in (FULL_SIGMA, C1_CHAIN):
        raise UsageError(f"csa-rate mode must be {FULL_SIGMA} or {C1_CHAIN}")
    if mode == C1_CHAIN and any(c != 1.0 for c in cfg.cs):
        raise UsageError(f"mode {C1_CHAIN} requires --c 1")
    grid = [(t, lam, c, d) for lam in cfg.lambdas for c in cfg.cs for d in cfg.d_sigmas
            for t in cfg.thetas]

    def one(i, point):
        theta, lam, c, d = point
        s = point_seed(cfg.seed, i)
        r = csa_rate(ProblemGeometry(theta, cfg.n), AlgoParams(lam=lam, c=c, d_sigma=d),
                     cfg.steps, s, mode, burnin)
        return [theta, lam, c, d, r.mean, r.stderr, mode, cfg.steps, s, r.flag]

    header = ["theta", "lambda", "c", "d_sigma", "rate", "stderr", "mode", "steps", "seed", "flag"]
    return header, _map(one, grid, cfg.jobs)


def cmd_sphere(cfg: RunConfig):
    grid = [(d, c) for d in cfg.d_sigmas for c in cfg.cs]
    lam = cfg.lambdas[0]

    def one(i, point):
        d, c = point
        s = point_seed(cfg.seed, i)
        mean, se, stopped = sphere_mean_log_eta(cfg.n, AlgoParams(lam=lam, c=c, d_sigma=d),
                                                cfg.steps, s, cfg.replicates)
        return [d, c, mean, se, lam, cfg.n, cfg.replicates, stopped, cfg.steps, s]

    header = ["d_sigma", "c", "mean_log_eta", "stderr", "lambda", "n", "replicates",
              "stopped_early", "steps", "seed"]
    return header, _map(one, grid, cfg.jobs)


def _boundary_rows(cfg: RunConfig, grid, search, fixed_names):
    traces: list = [None] * len(grid)

    def one(i, point):
        theta, fixed = point[0], point[1:]
        s = point_seed(cfg.seed, i)
        try:
            res = search(theta, *fixed, s)
        except BoundaryNotFound as exc:
            print(f"warning: theta={theta:g}: {exc}", file=sys.stderr)
            return [theta, *fixed, math.nan, math.nan, "not_found", 0, s]
        traces[i] = (fixed, res.trace)
        bad = sum(e.outcome == INDETERMINATE for e in res.trace)
        if bad:
            print(f"warning: theta={theta:g}: {bad} indeterminate run(s)", file=sys.stderr)
        return [theta, *fixed, res.value, res.bracket_width, res.flag, bad, s]

    rows = _map(one, grid, cfg.jobs)
    if cfg.trace:
        trace_rows = []
        for item in traces:
            if item is None:
                continue
            fixed, entries = item
            trace_rows += [[e.theta, *fixed, e.tested, e.outcome, e.steps_used, e.final_log_sigma]
                           for e in entries]
        header = ["theta", *fixed_names, "tested", "verdict", "steps", "final_log_sigma"]
        _emit(render_csv(cfg.comment_lines(), header, trace_rows), cfg.trace)
    return rows


def cmd_lambda_crit(cfg: RunConfig):
    grid = [(t, c, d) for c in cfg.cs for d in cfg.d_sigmas for t in cfg.thetas]

    def search(theta, c, d, s):
        return lambda_crit(theta, c, d, cfg.bound, s, cfg.n, cfg.replicates, cfg.steps)

    header = ["theta", "c", "d_sigma", "lambda_crit", "bracket_width", "flag", "indeterminate",
              "seed"]
    return header, _boundary_rows(cfg, grid, search, ["c", "d_sigma"])


def cmd_c_crit(cfg: RunConfig):
    grid = [(t, lam, d) for lam in cfg.lambdas for d in cfg.d_sigmas for t in cfg.thetas]

    def search(theta, lam, d, s):
        return c_crit(theta, lam, d, cfg.bound, s, cfg.n, cfg.replicates, cfg.steps)

    header = ["theta", "lambda", "d_sigma", "c_crit", "bracket_width", "flag", "indeterminate",
              "seed"]
    return header, _boundary_rows(cfg, grid, search, ["lambda", "d_sigma"])


def cmd_verify(args) -> int:
    from .verification import run_checks

    results = run_checks(quick=args.quick, inject_fault=args.inject_fault, seed=args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


_SWEEPS = {
    "progress-rate": cmd_progress_rate,
    "stationary-delta": cmd_stationary_delta,
    "csa-rate": cmd_csa_rate,
    "sphere": cmd_sphere,
    "lambda-crit": cmd_lambda_crit,
    "c-crit": cmd_c_crit,
}

# per-command defaults for lists left unset on the command line
_DEFAULTS = {
    "progress-rate": dict(lambdas=[5, 10, 20]),
    "stationary-delta": dict(lambdas=[5, 10, 20], cs=[1.0, 1 / math.sqrt(2), 0.1, 0.01]),
    "csa-rate": dict(lambdas=[5], cs=[1 / math.sqrt(2)]),
    "sphere": dict(lambdas=[5], cs=[1.0, 0.5, 0.2, 0.1], d_sigmas=[1.0, 0.5, 0.2, 0.1, 0.05],
                   n=30, steps=SPHERE_STEPS, replicates=SPHERE_REPLICATES),
    "lambda-crit": dict(cs=[1.0, 0.5, 0.2, 0.05], steps=DEFAULT_MAX_STEPS),
    "c-crit": dict(lambdas=[5, 10, 20], steps=DEFAULT_MAX_STEPS),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--theta", type=_list_of(float), nargs="+", metavar="THETA",
                   help="constraint angles (comma or space separated; default 30 log-spaced in [0.01, 1.55])")
    p.add_argument("--lambda", dest="lam", type=_list_of(int), nargs="+", metavar="LAMBDA",
                   help="population sizes")
    p.add_argument("--c", type=_list_of(float), nargs="+", help="cumulation parameters")
    p.add_argument("--dsigma", type=_list_of(float), nargs="+", help="damping values")
    p.add_argument("--n", type=int, help="search space dimension (default 2; sphere 30)")
    p.add_argument("--steps", type=int, help="chain length, or max steps per boundary run")
    p.add_argument("--burnin", type=int, default=DEFAULT_BURNIN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker threads over grid points")
    p.add_argument("--out", help="output CSV path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resampling-es",
                     description="(1,lambda)-ES with resampling on a linearly constrained linear "
                                 "problem: simulations written as CSV tables.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "progress-rate": "normalized progress rate under constant step-size",
        "stationary-delta": "time-averaged normalized distance to the constraint",
        "csa-rate": "average log step-size change of the CSA chain",
        "sphere": "mean log step-size change of the CSA-ES on a sphere function",
        "lambda-crit": "smallest population size giving step-size divergence",
        "c-crit": "cumulation parameter at the divergence/convergence boundary",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _add_common(p)
        if name == "stationary-delta":
            p.add_argument("--mode", choices=[CONSTANT_SIGMA, CSA], default=CONSTANT_SIGMA)
        elif name == "csa-rate":
            p.add_argument("--mode", choices=[FULL_SIGMA, C1_CHAIN], default=FULL_SIGMA)
        if name in ("sphere", "lambda-crit", "c-crit"):
            p.add_argument("--replicates", type=int,
                           help="runs per point (sphere: averaged; searches: majority vote)")
        if name in ("lambda-crit", "c-crit"):
            p.add_argument("--bound", type=float,
                           help="|ln sigma| crossing threshold (default: 100 for c=1 else 20 / 1000 sqrt(c))")
            p.add_argument("--trace", help="write every threshold run of the searches to this CSV")
    v = sub.add_parser("verify", help="run the invariant suite", description="run the invariant suite")
    v.add_argument("--quick", action="store_true", help="small samples (about 10^4)")
    v.add_argument("--inject-fault", action="store_true",
                   help="flip the sign of the constant step-size update (must make checks fail)")
    v.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> RunConfig:
    d = _DEFAULTS[args.command]
    pick = lambda given, key, fallback: given if given is not None else d.get(key, fallback)
    cfg = RunConfig(
        command=args.command,
        thetas=pick(_flatten(args.theta), "thetas", list(DEFAULT_THETAS)),
        lambdas=pick(_flatten(args.lam), "lambdas", [5]),
        cs=pick(_flatten(args.c), "cs", [1.0]),
        d_sigmas=pick(_flatten(args.dsigma), "d_sigmas", [1.0]),
        n=pick(args.n, "n", 2),
        steps=pick(args.steps, "steps", DEFAULT_STEPS),
        burnin=args.burnin,
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
        mode=getattr(args, "mode", None),
        replicates=pick(getattr(args, "replicates", None), "replicates", 1),
        bound=getattr(args, "bound", None),
        trace=getattr(args, "trace", None),
    )
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = config_from_args(args)
        header, rows = _SWEEPS[cfg.command](cfg)
        _emit(render_csv(cfg.comment_lines(), header, rows), cfg.out)
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"resampling-es: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError, OverflowError) as exc:
        print(f"resampling-es: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
