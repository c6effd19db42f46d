"""Dense-oracle equivalence checks for the matrix-free block operators."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .block_system import (BlockOperatorContext, BlockSystem, assemble_dense_coarse,
                           assemble_dense_oracle)
from .pde_core import (PDECoefficients, SpatialGrid, SpatialOperator,
                       assemble_spatial_operator, gaussian_initial_condition)
from .propagators import TimeSlabPartition, make_coarse, make_fine
from .solvers import sequential_fine_solve

__all__ = ["CheckResult", "tiny_context", "corrupted", "run_oracle_checks", "DEFAULT_INSTANCES"]


@dataclass(frozen=True)
class CheckResult:
    instance: str
    check: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    @property
    def name(self) -> str:
        return f"{self.instance}/{self.check}"


def tiny_context(dimension: int, points: int, N: int,
                 coefficients: PDECoefficients = PDECoefficients(),
                 T: Optional[float] = None, dt_fine: float = 1e-3) -> BlockOperatorContext:
    """Small problem for dense checks; default horizon gives 10 fine steps per slab."""
    grid = SpatialGrid(dimension, points)
    A = assemble_spatial_operator(coefficients, grid)
    partition = TimeSlabPartition(10 * dt_fine * N if T is None else T, N)
    return BlockOperatorContext(
        partition=partition,
        fine=make_fine(A, coefficients, partition, dt_fine),
        coarse=make_coarse(A, coefficients, partition),
        y0=gaussian_initial_condition(grid, sigma=0.2),
    )


# name -> (dimension, points per axis incl. boundary, N, coefficients)
DEFAULT_INSTANCES = {
    "heat1d": (1, 7, 3, PDECoefficients(mu=1.0)),
    "diffusion2d": (2, 5, 2, PDECoefficients(mu=1.0)),
    "adr2d": (2, 5, 3, PDECoefficients(mu=0.1, r=0.5, velocity="rotation")),
}


def corrupted(ctx: BlockOperatorContext, factor: float = 1.001) -> BlockOperatorContext:
    """Copy of ``ctx`` whose fine propagator uses a perturbed operator (negative control)."""
    fine = ctx.fine
    bad = SpatialOperator(matrix=(factor * fine.operator.matrix).tocsr(),
                          grid=fine.grid, symmetric=fine.operator.symmetric)
    new_fine = make_fine(bad, fine.coefficients, ctx.partition, fine.dt)
    return replace(ctx, fine=new_fine)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b) / scale)


def check_instance(name: str, ctx: BlockOperatorContext, n_vectors: int = 20,
                   tol: float = 1e-10, seed: int = 0,
                   apply_ctx: Optional[BlockOperatorContext] = None) -> list[CheckResult]:
    """Compare matrix-free operators of ``apply_ctx`` (default ``ctx``) with
    dense matrices built from ``ctx``."""
    F, Ginv = assemble_dense_oracle(ctx)
    G = assemble_dense_coarse(ctx)
    system = BlockSystem(apply_ctx if apply_ctx is not None else ctx)
    rng = np.random.default_rng(seed)
    f_err = g_err = 0.0
    for _ in range(n_vectors):
        v = rng.standard_normal(ctx.shape)
        f_err = max(f_err, _rel(system.apply_F(v).ravel(), F @ v.ravel()))
        g_err = max(g_err, _rel(system.apply_G_inverse(v).ravel(), Ginv @ v.ravel()))
    eye = np.eye(F.shape[0])
    exact = sequential_fine_solve(system)
    return [
        CheckResult(name, "apply_F", f_err, tol),
        CheckResult(name, "apply_G_inverse", g_err, tol),
        CheckResult(name, "Ginv_G_identity", float(np.max(np.abs(Ginv @ G - eye))), tol),
        CheckResult(name, "continuity", _rel(system.apply_F(exact), system.assemble_rhs()), tol),
    ]


def run_oracle_checks(instances: Optional[dict] = None, n_vectors: int = 20,
                      tol: float = 1e-10, corrupt: bool = False) -> list[CheckResult]:
    results = []
    for name, (dim, points, N, coeffs) in (instances or DEFAULT_INSTANCES).items():
        ctx = tiny_context(dim, points, N, coeffs)
        results += check_instance(name, ctx, n_vectors, tol,
                                  apply_ctx=corrupted(ctx) if corrupt else None)
    return results
