"""``pit`` command line: benchmark runs and oracle verification."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .block_system import OracleSizeError
from .executor import SlabTaskError
from .experiments import CASES, SCALES, preset, run_experiment
from .pde_core import InnerSolveError, PDECoefficients, SpatialGrid
from .propagators import TimeSlabPartition, fine_steps
from .solvers import SolverConfig
from .verify import run_oracle_checks

log = logging.getLogger("pitsbicg")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2

CONFIG_KEYS = {
    "case": str, "mu": float, "r": float, "velocity": str, "grid_points": int,
    "T": float, "dt_fine": float, "slabs": str, "epsilon": float,
    "epsilon0": float, "max_iters": int, "workers": int,
}


class ConfigError(ValueError):
    pass


def parse_slabs(text: str) -> tuple[int, ...]:
    try:
        slabs = tuple(int(s) for s in text.replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError(f"bad slab list {text!r}") from None
    if not slabs or min(slabs) < 2:
        raise ConfigError(f"slab counts must be integers >= 2, got {text!r}")
    return slabs


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key or not value:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return values


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pit",
        description="Parallel-in-time solvers: PiTSBiCG and parareal benchmarks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark case and write a convergence CSV")
    run.add_argument("--case", choices=sorted(CASES), default=None)
    run.add_argument("--solver", choices=["parareal", "pitsbicg", "both"], default="both")
    run.add_argument("--slabs", default=None,
                     help="comma-separated slab counts (default 4,8,16,32,64)")
    run.add_argument("--scale", choices=sorted(SCALES), default="desk")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--workers", type=_positive_int, default=None)
    run.add_argument("--epsilon", type=float, default=None)
    run.add_argument("--config", default=None, help="key = value file overriding flags")

    ver = sub.add_parser("verify", help="check matrix-free operators against dense matrices")
    ver.add_argument("--dimension", type=int, choices=[1, 2], default=None)
    ver.add_argument("--points", type=int, default=None,
                     help="grid points per axis including boundary")
    ver.add_argument("--slabs", type=int, default=None)
    ver.add_argument("--vectors", type=_positive_int, default=20)
    ver.add_argument("--tol", type=float, default=1e-10)
    ver.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    return parser


def _run(args) -> int:
    settings = read_config(args.config) if args.config else {}
    case = settings.pop("case", args.case)
    if case is None:
        raise ConfigError("no case given (use --case or 'case =' in the config)")
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    p = preset(case, args.scale)
    if args.slabs is not None:
        p = replace(p, slabs=parse_slabs(args.slabs))
    if "slabs" in settings:
        p = replace(p, slabs=parse_slabs(settings.pop("slabs")))
    overrides = {k: settings.pop(k) for k in ("mu", "r", "velocity", "grid_points",
                                               "T", "dt_fine") if k in settings}
    p = replace(p, **overrides)
    try:
        PDECoefficients(mu=p.mu, r=p.r, velocity=p.velocity)
        SpatialGrid(2, p.grid_points)
        for N in p.slabs:
            fine_steps(TimeSlabPartition(p.T, N), p.dt_fine)
        cfg = SolverConfig(
            epsilon=settings.get("epsilon", args.epsilon if args.epsilon is not None else 1e-8),
            epsilon0=settings.get("epsilon0", 1e-12),
            max_iters=settings.get("max_iters", 200))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    workers = settings.get("workers", args.workers)
    if workers is not None and workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    solvers = ["parareal", "pitsbicg"] if args.solver == "both" else [args.solver]

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / f"{p.case}.csv"
        probe.open("a").close()
    except OSError as exc:
        raise ConfigError(f"output path {out} is not writable: {exc}") from exc

    path = run_experiment(p, solvers, cfg, out, workers)
    print(f"wrote {path}")
    return EXIT_OK


def _verify(args) -> int:
    instances = None
    if any(v is not None for v in (args.dimension, args.points, args.slabs)):
        dim = args.dimension or 1
        instances = {"custom": (dim, args.points or 7, args.slabs or 3, PDECoefficients())}
    results = run_oracle_checks(instances, n_vectors=args.vectors, tol=args.tol,
                                corrupt=args.corrupt)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  "
              f"error {r.error:.2e}  tol {r.tolerance:.0e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"oracle checks failed: {', '.join(failed)}")
        return EXIT_SOLVER
    print("all oracle checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        return _verify(args)
    except (ConfigError, OracleSizeError) as exc:
        print(f"pit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InnerSolveError, SlabTaskError, RuntimeError, ValueError) as exc:
        print(f"pit: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
