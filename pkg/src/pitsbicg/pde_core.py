"""Finite-difference advection-diffusion-reaction operators and implicit stepping.

The semi-discrete system is ``dy/dt = -A y + f(t)`` on the interior nodes of a
uniform grid with homogeneous Dirichlet boundary values.  Fields are plain
1D numpy arrays holding one value per interior node; in 2D the node ordering
is C-order over ``(x1, x2)``, i.e. ``index = i1 * m + i2`` with ``m`` interior
nodes per axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SpatialGrid",
    "PDECoefficients",
    "SpatialOperator",
    "ImplicitStepper",
    "InnerSolveError",
    "assemble_spatial_operator",
    "backward_euler_step",
    "inner_product",
    "l2_norm",
    "gaussian_initial_condition",
]

INNER_RTOL = 1e-12

SourceFunction = Callable[[float, np.ndarray], np.ndarray]


class InnerSolveError(RuntimeError):
    """Implicit step linear solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of ``points_per_axis`` nodes (boundary included) per axis."""

    dimension: int
    points_per_axis: int
    extent: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.points_per_axis < 3:
            raise ValueError(
                f"points_per_axis must be >= 3, got {self.points_per_axis}")
        lo, hi = self.extent
        if not hi > lo:
            raise ValueError(f"empty extent {self.extent}")

    @property
    def spacing(self) -> float:
        lo, hi = self.extent
        return (hi - lo) / (self.points_per_axis - 1)

    @property
    def interior_per_axis(self) -> int:
        return self.points_per_axis - 2

    @property
    def size(self) -> int:
        """Number of interior nodes (unknowns)."""
        return self.interior_per_axis ** self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    def axis_coordinates(self) -> np.ndarray:
        lo = self.extent[0]
        return lo + self.spacing * np.arange(1, self.points_per_axis - 1)

    def interior_coordinates(self) -> np.ndarray:
        """Array of shape ``(size, dimension)`` with the interior node positions."""
        x = self.axis_coordinates()
        if self.dimension == 1:
            return x[:, None]
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])


@dataclass(frozen=True)
class PDECoefficients:
    """Coefficients of ``dy/dt + u.grad(y) - div(mu grad y) + r y = f``.

    ``velocity`` is ``"zero"`` or ``"rotation"`` (``u = (-x2, x1)``).
    ``source`` maps ``(t, coords)`` to nodal values; ``None`` means ``f = 0``.
    """

    mu: float = 1.0
    r: float = 0.0
    velocity: str = "zero"
    source: Optional[SourceFunction] = field(default=None, compare=False)

    def __post_init__(self):
        if self.velocity not in ("zero", "rotation"):
            raise ValueError(f"unknown velocity field {self.velocity!r}")
        if not self.mu >= 0.0:
            raise ValueError(f"diffusion coefficient must be >= 0, got {self.mu}")

    @property
    def pure_advection(self) -> bool:
        return self.mu == 0.0 and self.velocity != "zero"

    def source_values(self, t: float, grid: SpatialGrid) -> Optional[np.ndarray]:
        if self.source is None:
            return None
        values = np.asarray(
            self.source(t, grid.interior_coordinates()), dtype=float)
        return np.broadcast_to(values, (grid.size,)).astype(float, copy=True)


@dataclass(frozen=True)
class SpatialOperator:
    matrix: sp.csr_matrix
    grid: SpatialGrid
    symmetric: bool

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _velocity(coeffs: PDECoefficients, coords: np.ndarray) -> np.ndarray:
    if coeffs.velocity == "zero":
        return np.zeros_like(coords)
    if coords.shape[1] != 2:
        raise ValueError("the rotational velocity field requires a 2D grid")
    return np.column_stack([-coords[:, 1], coords[:, 0]])


def assemble_spatial_operator(coeffs: PDECoefficients,
                              grid: SpatialGrid) -> SpatialOperator:
    """Assemble ``A`` for ``-mu Laplace + u.grad + r``.

    Diffusion uses the centered 3-point stencil per axis; advection is
    first-order upwind per velocity component.
    """
    m = grid.interior_per_axis
    h = grid.spacing
    n = grid.size
    coords = grid.interior_coordinates()
    u = _velocity(coeffs, coords)
    strides = [m] if grid.dimension == 2 else []
    strides.append(1)
    index = np.arange(n)
    # per-axis position of each node, needed to drop boundary neighbours
    positions = np.unravel_index(index, (m,) * grid.dimension)

    diag = np.full(n, coeffs.r, dtype=float)
    rows, cols, vals = [], [], []
    for axis, stride in enumerate(strides):
        ua = u[:, axis]
        diag += 2.0 * coeffs.mu / h**2 + np.abs(ua) / h
        lower = -coeffs.mu / h**2 - np.maximum(ua, 0.0) / h
        upper = -coeffs.mu / h**2 - np.maximum(-ua, 0.0) / h
        pos = positions[axis]
        has_lower = pos > 0
        has_upper = pos < m - 1
        rows += [index[has_lower], index[has_upper]]
        cols += [index[has_lower] - stride, index[has_upper] + stride]
        vals += [lower[has_lower], upper[has_upper]]

    rows.append(index)
    cols.append(index)
    vals.append(diag)
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return SpatialOperator(matrix=matrix, grid=grid,
                           symmetric=coeffs.velocity == "zero")


class ImplicitStepper:
    """Solver for ``(I + dt A) y' = rhs`` with the system matrix prepared once.

    ``method="direct"`` factorizes with sparse LU; ``method="krylov"`` runs
    CG (symmetric ``A``) or BiCGStab to ``INNER_RTOL``.  Both paths check the
    achieved residual and raise :class:`InnerSolveError` above tolerance.
    Instances are read-only after construction and may be shared by threads.
    """

    def __init__(self, operator: SpatialOperator, dt: float,
                 method: str = "direct"):
        if not dt > 0.0:
            raise ValueError(f"time step must be positive, got {dt}")
        if method not in ("direct", "krylov"):
            raise ValueError(f"unknown inner solve method {method!r}")
        self.operator = operator
        self.dt = dt
        self.method = method
        n = operator.size
        self.system = (sp.identity(n, format="csr")
                       + dt * operator.matrix).tocsr()
        self.maxiter = 10 * n
        self._lu = spla.splu(self.system.tocsc()) if method == "direct" else None

    def _relative_residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        scale = np.linalg.norm(rhs)
        res = np.linalg.norm(rhs - self.system @ x)
        return res / scale if scale > 0.0 else res

    def solve(self, rhs: np.ndarray, guess: Optional[np.ndarray] = None) -> np.ndarray:
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self._lu is not None:
            x = self._lu.solve(rhs)
        else:
            krylov = spla.cg if self.operator.symmetric else spla.bicgstab
            x, info = krylov(self.system, rhs, x0=guess, rtol=INNER_RTOL,
                             atol=0.0, maxiter=self.maxiter)
            if info != 0:
                raise InnerSolveError(
                    f"{krylov.__name__} stopped after {self.maxiter} iterations",
                    self._relative_residual(x, rhs))
        residual = self._relative_residual(x, rhs)
        if not residual <= INNER_RTOL:
            raise InnerSolveError("implicit step solve inaccurate", residual)
        return x

    def step(self, y: np.ndarray, source: Optional[np.ndarray] = None) -> np.ndarray:
        rhs = y if source is None else y + self.dt * source
        return self.solve(rhs, guess=y)


def backward_euler_step(A: SpatialOperator, y: np.ndarray, dt: float,
                        source_at_t: Optional[np.ndarray] = None,
                        method: str = "direct") -> np.ndarray:
    """One backward Euler step: solve ``(I + dt A) y' = y + dt f``."""
    y = np.asarray(y, dtype=float)
    _check_field(y, A.grid)
    return ImplicitStepper(A, dt, method=method).step(y, source_at_t)


def _check_field(a: np.ndarray, grid: SpatialGrid):
    if a.shape != (grid.size,):
        raise ValueError(
            f"field of shape {a.shape} does not live on a grid with "
            f"{grid.size} interior nodes")


def inner_product(a: np.ndarray, b: np.ndarray, grid: SpatialGrid) -> float:
    """Discrete L2 pairing ``h^d * sum(a * b)``."""
    _check_field(a, grid)
    _check_field(b, grid)
    return grid.cell_volume * float(np.dot(a, b))


def l2_norm(a: np.ndarray, grid: SpatialGrid) -> float:
    return float(np.sqrt(inner_product(a, a, grid)))


def gaussian_initial_condition(grid: SpatialGrid, center=None,
                               sigma: float = 0.1) -> np.ndarray:
    """Unit-amplitude Gaussian bump sampled at the interior nodes."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if center is None:
        center = np.zeros(grid.dimension)
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    d2 = np.sum((grid.interior_coordinates() - center) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * sigma**2))
