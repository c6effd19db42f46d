"""Fine and coarse slab propagators built from backward Euler stepping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pde_core import ImplicitStepper, PDECoefficients, SpatialGrid, SpatialOperator

__all__ = ["TimeSlabPartition", "Propagator", "fine_steps", "make_fine", "make_coarse"]


@dataclass(frozen=True)
class TimeSlabPartition:
    """Uniform split of ``[0, T]`` into ``N`` slabs."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"need at least 2 slabs, got N={self.N}")
        if not self.T > 0.0:
            raise ValueError(f"horizon must be positive, got T={self.T}")

    @property
    def slab_length(self) -> float:
        return self.T / self.N

    @property
    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def start(self, n: int) -> float:
        return n * self.slab_length


class Propagator:
    """Affine map advancing a field across one slab with ``steps_per_slab``
    backward Euler steps.

    The linear part (``propagate_homogeneous``) and the source part
    (``source_contribution``) are exposed separately so that the block
    operator stays linear.  The implicit system is prepared once and shared
    by every slab and every call.
    """

    def __init__(self, operator: SpatialOperator, coefficients: PDECoefficients,
                 partition: TimeSlabPartition, steps_per_slab: int,
                 role: str = "fine", method: str = "direct"):
        if steps_per_slab < 1:
            raise ValueError(f"steps_per_slab must be >= 1, got {steps_per_slab}")
        if role not in ("fine", "coarse"):
            raise ValueError(f"unknown propagator role {role!r}")
        self.operator = operator
        self.coefficients = coefficients
        self.partition = partition
        self.steps_per_slab = steps_per_slab
        self.role = role
        self.method = method
        self.stepper = ImplicitStepper(operator, self.dt, method=method)

    @property
    def grid(self) -> SpatialGrid:
        return self.operator.grid

    @property
    def dt(self) -> float:
        return self.partition.slab_length / self.steps_per_slab

    @property
    def has_source(self) -> bool:
        return self.coefficients.source is not None

    def _check_slab(self, n: int):
        if not 0 <= n < self.partition.N:
            raise IndexError(f"slab index {n} outside [0, {self.partition.N})")

    def _march(self, y: np.ndarray, n: int, with_source: bool) -> np.ndarray:
        self._check_slab(n)
        stepper = self.stepper
        t0 = self.partition.start(n)
        y = np.array(y, dtype=float)
        for j in range(1, self.steps_per_slab + 1):
            f = None
            if with_source:
                f = self.coefficients.source_values(t0 + j * self.dt, self.grid)
            y = stepper.step(y, f)
        return y

    def propagate(self, lam: np.ndarray, n: int) -> np.ndarray:
        """Solution at ``T_{n+1}`` of the slab problem started from ``lam``."""
        return self._march(lam, n, with_source=self.has_source)

    def propagate_homogeneous(self, lam: np.ndarray, n: int) -> np.ndarray:
        return self._march(lam, n, with_source=False)

    def source_contribution(self, n: int) -> np.ndarray:
        if not self.has_source:
            self._check_slab(n)
            return np.zeros(self.grid.size)
        return self._march(np.zeros(self.grid.size), n, with_source=True)

    def __repr__(self):
        return (f"Propagator(role={self.role!r}, N={self.partition.N}, "
                f"steps_per_slab={self.steps_per_slab}, dt={self.dt:g})")


def fine_steps(partition: TimeSlabPartition, dt_fine: float) -> int:
    """Number of fine steps per slab; the slab length must be a multiple of ``dt_fine``."""
    ratio = partition.slab_length / dt_fine
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(ratio, 1.0):
        raise ValueError(
            f"slab length {partition.slab_length:g} is not a multiple of "
            f"dt_fine={dt_fine:g}")
    return steps


def make_fine(operator: SpatialOperator, coefficients: PDECoefficients,
              partition: TimeSlabPartition, dt_fine: float = 1e-3,
              method: str = "direct") -> Propagator:
    return Propagator(operator, coefficients, partition,
                      fine_steps(partition, dt_fine), role="fine", method=method)


def make_coarse(operator: SpatialOperator, coefficients: PDECoefficients,
                partition: TimeSlabPartition,
                method: str = "direct") -> Propagator:
    """Coarse propagator: a single backward Euler step across the slab."""
    return Propagator(operator, coefficients, partition, 1, role="coarse",
                      method=method)
