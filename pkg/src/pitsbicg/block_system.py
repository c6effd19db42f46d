"""Matrix-free block algebra of the time-slab continuity system.

A block vector is a float array of shape ``(N, size)``: one field per slab
start ``T_0 ... T_{N-1}``.  The continuity system reads ``F Lam = B`` with
``F`` unit lower block-bidiagonal (``-F_fine`` on the subdiagonal); the
preconditioner ``G`` has the same shape with the coarse propagator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .executor import SlabExecutor
from .pde_core import SpatialGrid
from .propagators import Propagator, TimeSlabPartition

__all__ = [
    "BlockOperatorContext",
    "BlockSystem",
    "OracleSizeError",
    "ORACLE_MAX_UNKNOWNS",
    "block_inner_product",
    "block_norm_N_inf",
    "assemble_dense_oracle",
    "assemble_dense_coarse",
]

ORACLE_MAX_UNKNOWNS = 2000


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class BlockOperatorContext:
    partition: TimeSlabPartition
    fine: Propagator
    coarse: Propagator
    y0: np.ndarray

    def __post_init__(self):
        if self.fine.grid != self.coarse.grid:
            raise ValueError("fine and coarse propagators live on different grids")
        if self.fine.partition != self.partition or self.coarse.partition != self.partition:
            raise ValueError("propagators do not share the slab partition")
        if np.shape(self.y0) != (self.grid.size,):
            raise ValueError("initial datum does not match the grid")

    @property
    def grid(self) -> SpatialGrid:
        return self.fine.grid

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def shape(self) -> tuple[int, int]:
        return (self.partition.N, self.grid.size)

    @property
    def unknowns(self) -> int:
        return self.partition.N * self.grid.size


def _check_blocks(a: np.ndarray, grid: SpatialGrid, N: Optional[int] = None):
    if a.ndim != 2 or a.shape[1] != grid.size or (N is not None and a.shape[0] != N):
        raise ValueError(f"block vector of shape {a.shape} does not match "
                         f"({N if N is not None else 'N'}, {grid.size})")


def block_inner_product(a: np.ndarray, b: np.ndarray, grid: SpatialGrid) -> float:
    """Sum over blocks of the discrete L2 pairing."""
    _check_blocks(a, grid)
    if a.shape != b.shape:
        raise ValueError(f"block shapes differ: {a.shape} vs {b.shape}")
    return grid.cell_volume * float(np.sum(a * b))


def block_norm_N_inf(a: np.ndarray, grid: SpatialGrid) -> float:
    """Largest per-block discrete L2 norm."""
    _check_blocks(a, grid)
    if a.shape[0] == 0:
        return 0.0
    return float(np.sqrt(grid.cell_volume * np.max(np.einsum("ij,ij->i", a, a))))


class BlockSystem:
    """Applies ``F``, ``G^{-1}`` and the right-hand side ``B`` for one context.

    Keeps running counts of fine and coarse propagator applications made by
    :meth:`apply_F` and :meth:`apply_G_inverse` (``N - 1`` per call each).
    The counters are touched only by the calling thread.
    """

    def __init__(self, ctx: BlockOperatorContext,
                 executor: Optional[SlabExecutor] = None):
        self.ctx = ctx
        self.executor = executor if executor is not None else SlabExecutor(1)
        self.fine_applications = 0
        self.coarse_applications = 0

    @property
    def grid(self) -> SpatialGrid:
        return self.ctx.grid

    @property
    def N(self) -> int:
        return self.ctx.N

    def zeros(self) -> np.ndarray:
        return np.zeros(self.ctx.shape)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return block_inner_product(a, b, self.grid)

    def norm(self, a: np.ndarray) -> float:
        return block_norm_N_inf(a, self.grid)

    def apply_F(self, L: np.ndarray) -> np.ndarray:
        _check_blocks(L, self.grid, self.N)
        fine = self.ctx.fine
        tasks = [(lambda n=n: fine.propagate_homogeneous(L[n], n))
                 for n in range(self.N - 1)]
        moved = self.executor.parallel_map_slabs(tasks, slabs=range(self.N - 1))
        self.fine_applications += len(tasks)
        out = np.empty_like(L)
        out[0] = L[0]
        for n in range(1, self.N):
            out[n] = L[n] - moved[n - 1]
        return out

    def _sweep(self, V: np.ndarray) -> np.ndarray:
        coarse = self.ctx.coarse
        W = np.empty_like(V)
        W[0] = V[0]
        for n in range(1, self.N):
            W[n] = V[n] + coarse.propagate_homogeneous(W[n - 1], n - 1)
        return W

    def apply_G_inverse(self, V: np.ndarray) -> np.ndarray:
        """Forward substitution through the coarse lower-triangular system."""
        _check_blocks(V, self.grid, self.N)
        W = self.executor.run_sequential(self._sweep, V)
        self.coarse_applications += self.N - 1
        return W

    def apply_preconditioned(self, L: np.ndarray) -> np.ndarray:
        return self.apply_G_inverse(self.apply_F(L))

    def assemble_rhs(self) -> np.ndarray:
        B = self.zeros()
        B[0] = self.ctx.y0
        for n in range(1, self.N):
            B[n] = self.ctx.fine.source_contribution(n - 1)
        return B

    def preconditioned_residual(self, L: np.ndarray,
                                B: Optional[np.ndarray] = None) -> np.ndarray:
        """``G^{-1} (B - F L)``."""
        if B is None:
            B = self.assemble_rhs()
        return self.apply_G_inverse(B - self.apply_F(L))

    def coarse_trajectory(self) -> np.ndarray:
        """Sequential coarse sweep from ``y0`` (source included)."""
        L = self.zeros()
        L[0] = self.ctx.y0
        for n in range(1, self.N):
            L[n] = self.ctx.coarse.propagate(L[n - 1], n - 1)
        return L


def _check_oracle_size(ctx: BlockOperatorContext):
    if ctx.unknowns > ORACLE_MAX_UNKNOWNS:
        raise OracleSizeError(
            f"dense oracle refused: N * nodes = {ctx.unknowns} exceeds "
            f"{ORACLE_MAX_UNKNOWNS}")


def _slab_matrix(p: Propagator, n: int) -> np.ndarray:
    """Matrix of the homogeneous propagator on slab ``n``, probed column-wise."""
    size = p.grid.size
    cols = [p.propagate_homogeneous(e, n) for e in np.eye(size)]
    return np.column_stack(cols)


def _bidiagonal(blocks: list[np.ndarray], size: int) -> np.ndarray:
    N = len(blocks) + 1
    M = np.eye(N * size)
    for n, Phi in enumerate(blocks, start=1):
        M[n * size:(n + 1) * size, (n - 1) * size:n * size] = -Phi
    return M


def assemble_dense_oracle(ctx: BlockOperatorContext) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(F, G^{-1})`` for small instances, acting on row-major flattened blocks.

    ``G^{-1}`` is built explicitly from products of coarse slab matrices
    (block ``(i, j)`` is ``G_{i-1} ... G_j``), not by forward substitution.
    """
    _check_oracle_size(ctx)
    size, N = ctx.grid.size, ctx.N
    F = _bidiagonal([_slab_matrix(ctx.fine, n) for n in range(N - 1)], size)
    coarse = [_slab_matrix(ctx.coarse, n) for n in range(N - 1)]
    Ginv = np.zeros((N * size, N * size))
    for j in range(N):
        prod = np.eye(size)
        for i in range(j, N):
            if i > j:
                prod = coarse[i - 1] @ prod
            Ginv[i * size:(i + 1) * size, j * size:(j + 1) * size] = prod
    return F, Ginv


def assemble_dense_coarse(ctx: BlockOperatorContext) -> np.ndarray:
    """Dense coarse block matrix ``G`` (same layout as ``F``)."""
    _check_oracle_size(ctx)
    return _bidiagonal([_slab_matrix(ctx.coarse, n) for n in range(ctx.N - 1)],
                       ctx.grid.size)
