"""Experiment presets and the benchmark driver writing convergence CSVs."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .block_system import BlockOperatorContext, BlockSystem
from .executor import SlabExecutor, timing_report
from .pde_core import (PDECoefficients, SpatialGrid, assemble_spatial_operator,
                       gaussian_initial_condition)
from .propagators import TimeSlabPartition, make_coarse, make_fine
from .solvers import SolverConfig, parareal_solve, pitsbicg_solve, sequential_fine_solve

__all__ = [
    "CASES",
    "CSV_COLUMNS",
    "ExperimentPreset",
    "preset",
    "build_context",
    "run_case",
    "run_experiment",
]

log = logging.getLogger(__name__)

CASES = {
    "diffusion": dict(mu=1.0, r=0.0, velocity="zero"),
    "diffusion_reaction": dict(mu=1.0, r=1.5, velocity="zero"),
    "advection_diffusion_reaction": dict(mu=0.1, r=0.5, velocity="rotation"),
}

SCALES = {
    "paper": dict(grid_points=51, T=6.4),
    "desk": dict(grid_points=33, T=1.6),
}

CSV_COLUMNS = ["case", "solver", "N", "k", "residual_N_inf", "fine_applications",
               "coarse_applications", "error_vs_reference", "wall_ms"]


@dataclass(frozen=True)
class ExperimentPreset:
    case: str
    mu: float
    r: float
    velocity: str
    grid_points: int = 33
    T: float = 1.6
    dt_fine: float = 1e-3
    slabs: tuple[int, ...] = (4, 8, 16, 32, 64)

    @property
    def coefficients(self) -> PDECoefficients:
        return PDECoefficients(mu=self.mu, r=self.r, velocity=self.velocity)

    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(2, self.grid_points)


def preset(case: str, scale: str = "desk", **overrides) -> ExperimentPreset:
    if case not in CASES:
        raise KeyError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    if scale not in SCALES:
        raise KeyError(f"unknown scale {scale!r}; choose from {', '.join(SCALES)}")
    p = ExperimentPreset(case=case, **CASES[case], **SCALES[scale])
    return replace(p, **overrides) if overrides else p


def build_context(p: ExperimentPreset, N: int, method: str = "direct") -> BlockOperatorContext:
    grid = p.grid
    coeffs = p.coefficients
    A = assemble_spatial_operator(coeffs, grid)
    partition = TimeSlabPartition(p.T, N)
    return BlockOperatorContext(
        partition=partition,
        fine=make_fine(A, coeffs, partition, p.dt_fine, method=method),
        coarse=make_coarse(A, coeffs, partition, method=method),
        y0=gaussian_initial_condition(grid),
    )


def run_case(p: ExperimentPreset, N: int, solvers: Iterable[str],
             config: SolverConfig, workers: Optional[int] = None) -> list[dict]:
    """Run the requested solvers on one slab count; one dict per CSV row."""
    ctx = build_context(p, N)
    rows = []
    with SlabExecutor(workers) as executor:
        reference = sequential_fine_solve(BlockSystem(ctx))
        for name in solvers:
            solve = {"parareal": parareal_solve, "pitsbicg": pitsbicg_solve}[name]
            executor.stats.reset()
            system = BlockSystem(ctx, executor)
            _, history = solve(system, config, reference=reference)
            report = timing_report(history, executor.stats, executor.worker_count)
            log.info("%s %s N=%d: %s after %g iterations, residual %.3e, "
                     "fine applications %d, efficiency %.2f",
                     p.case, name, N, history.status, history.iterations,
                     history.final_residual, report["fine_applications"],
                     report["parallel_efficiency"])
            for r in history.records:
                rows.append({
                    "case": p.case, "solver": name, "N": N, "k": f"{r.k:g}",
                    "residual_N_inf": repr(r.residual),
                    "fine_applications": r.fine_applications,
                    "coarse_applications": r.coarse_applications,
                    "error_vs_reference": "" if r.error is None else repr(r.error),
                    "wall_ms": f"{1e3 * r.wall_s:.3f}",
                })
            if not history.converged:
                log.warning("%s %s N=%d stopped: %s", p.case, name, N, history.status)
    return rows


def run_experiment(p: ExperimentPreset, solvers: Sequence[str], config: SolverConfig,
                   out_dir, workers: Optional[int] = None) -> Path:
    """Run every slab count of ``p`` and write ``<out_dir>/<case>.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{p.case}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for N in p.slabs:
            writer.writerows(run_case(p, N, solvers, config, workers))
            fh.flush()
    return path
