"""Sequential reference, parareal and PiTSBiCG drivers for the continuity system."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .block_system import BlockOperatorContext, BlockSystem

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "ConvergenceHistory",
    "sequential_fine_solve",
    "initial_guess",
    "parareal_solve",
    "pitsbicg_solve",
]

log = logging.getLogger(__name__)

# divisions with a denominator below this magnitude count as breakdown
BREAKDOWN_TINY = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-8
    epsilon0: float = 1e-12
    max_iters: int = 200
    initial_guess: str = "coarse"

    def __post_init__(self):
        if not self.epsilon > self.epsilon0 > 0.0:
            raise ValueError(
                f"need epsilon > epsilon0 > 0, got {self.epsilon}, {self.epsilon0}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.initial_guess not in ("coarse", "zero"):
            raise ValueError(f"unknown initial guess policy {self.initial_guess!r}")


@dataclass(frozen=True)
class IterationRecord:
    """One history entry; ``k`` is a half-integer after a half-step exit."""

    k: float
    residual: float
    fine_applications: int
    coarse_applications: int
    error: Optional[float]
    wall_s: float


@dataclass
class ConvergenceHistory:
    """Per-iteration residuals and operator-application counts.

    ``fine_applications`` in a record is the fine work spent to produce that
    iterate.  For parareal the fine sweep that evaluates the residual of
    ``Lam^k`` is the same sweep that drives the next correction, so it is
    booked to iteration ``k + 1``; ``total_fine`` counts everything run.
    """

    solver: str
    N: int
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "running"
    restarts: int = 0
    breakdowns: int = 0
    half_step_exit: bool = False
    total_fine: int = 0
    total_coarse: int = 0
    initial_residual: Optional[np.ndarray] = None

    def append(self, record: IterationRecord):
        if self.records and record.k <= self.records[-1].k:
            raise ValueError("iteration records must be strictly increasing in k")
        self.records.append(record)

    @property
    def iterations(self) -> float:
        return self.records[-1].k if self.records else 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual

    @property
    def residuals(self) -> list[float]:
        return [r.residual for r in self.records]


def _as_system(system: Union[BlockSystem, BlockOperatorContext]) -> BlockSystem:
    if isinstance(system, BlockOperatorContext):
        return BlockSystem(system)
    return system


def sequential_fine_solve(system: Union[BlockSystem, BlockOperatorContext]) -> np.ndarray:
    """Breakpoint values of the serial fine trajectory: the exact solution."""
    system = _as_system(system)
    ctx = system.ctx
    L = system.zeros()
    L[0] = ctx.y0
    for n in range(1, ctx.N):
        L[n] = ctx.fine.propagate(L[n - 1], n - 1)
    return L


def initial_guess(system: BlockSystem, policy: str = "coarse") -> np.ndarray:
    if policy == "coarse":
        return system.coarse_trajectory()
    L = system.zeros()
    L[0] = system.ctx.y0
    return L


class _Recorder:
    def __init__(self, system: BlockSystem, history: ConvergenceHistory,
                 reference: Optional[np.ndarray], callback: Optional[Callable]):
        self.system = system
        self.history = history
        self.reference = reference
        self.callback = callback
        self.fine0 = system.fine_applications
        self.coarse0 = system.coarse_applications
        self.t0 = time.perf_counter()

    def counts(self) -> tuple[int, int]:
        return (self.system.fine_applications - self.fine0,
                self.system.coarse_applications - self.coarse0)

    def record(self, k: float, residual: float, L: np.ndarray,
               counts: Optional[tuple[int, int]] = None):
        fine, coarse = counts if counts is not None else self.counts()
        error = None
        if self.reference is not None:
            error = self.system.norm(L - self.reference)
        self.history.append(IterationRecord(
            k=k, residual=residual, fine_applications=fine,
            coarse_applications=coarse, error=error,
            wall_s=time.perf_counter() - self.t0))
        log.debug("%s k=%g residual=%.3e", self.history.solver, k, residual)
        if self.callback is not None:
            self.callback(k, L)

    def finish(self, status: str):
        self.history.status = status
        self.history.total_fine, self.history.total_coarse = self.counts()


def parareal_solve(system: Union[BlockSystem, BlockOperatorContext],
                   config: SolverConfig = SolverConfig(),
                   initial: Optional[np.ndarray] = None,
                   reference: Optional[np.ndarray] = None,
                   callback: Optional[Callable] = None):
    """Parareal as the preconditioned fixed-point iteration
    ``Lam <- Lam + G^{-1}(B - F Lam)``.

    Returns the last iterate whose residual was measured (and recorded), so
    the final record always describes the returned vector.  ``callback(k, L)``
    is called after every record, as in :func:`pitsbicg_solve`.
    """
    system = _as_system(system)
    history = ConvergenceHistory("parareal", system.N)
    rec = _Recorder(system, history, reference, callback)
    B = system.assemble_rhs()
    L = initial_guess(system, config.initial_guess) if initial is None else np.array(initial, dtype=float)

    k = 0
    while True:
        counts = rec.counts()
        correction = system.preconditioned_residual(L, B)
        if k == 0:
            history.initial_residual = correction
        residual = system.norm(correction)
        rec.record(k, residual, L, counts)
        if residual <= config.epsilon:
            rec.finish("converged")
            break
        if k >= config.max_iters:
            rec.finish("max_iterations")
            break
        L = L + correction
        k += 1
    return L, history


def pitsbicg_solve(system: Union[BlockSystem, BlockOperatorContext],
                   config: SolverConfig = SolverConfig(),
                   initial: Optional[np.ndarray] = None,
                   reference: Optional[np.ndarray] = None,
                   callback: Optional[Callable] = None):
    """Stabilized bi-conjugate gradient on ``G^{-1} F Lam = G^{-1} B``.

    Two applications of ``G^{-1} F`` per iteration.  The shadow residual is
    reset whenever ``|<R, R~>|`` drops to ``epsilon0``; vanishing
    denominators trigger the same reset.  When the intermediate residual
    ``S`` already meets the tolerance the iteration exits after its first
    half, recorded as iteration ``k + 0.5``.
    """
    system = _as_system(system)
    history = ConvergenceHistory("pitsbicg", system.N)
    rec = _Recorder(system, history, reference, callback)
    inner = system.inner
    norm = system.norm
    eps = config.epsilon

    B = system.assemble_rhs()
    L = initial_guess(system, config.initial_guess) if initial is None else np.array(initial, dtype=float)
    R = system.preconditioned_residual(L, B)
    history.initial_residual = R
    shadow = R.copy()
    P = R.copy()
    rho = inner(R, shadow)
    k = 0
    residual = norm(R)
    rec.record(k, residual, L)

    def restart(current):
        nonlocal shadow, P, rho
        shadow = current.copy()
        P = current.copy()
        rho = inner(current, shadow)

    attempts = 0
    status = "converged"
    while residual > eps:
        if attempts >= config.max_iters:
            status = "max_iterations"
            break
        attempts += 1

        D = system.apply_preconditioned(P)
        denom = inner(D, shadow)
        if abs(denom) < BREAKDOWN_TINY or rho == 0.0:
            history.breakdowns += 1
            restart(R)
            continue
        alpha = rho / denom
        S = R - alpha * D
        s_norm = norm(S)
        if s_norm <= eps:
            L = L + alpha * P
            R = S
            residual = s_norm
            k += 0.5
            history.half_step_exit = True
            rec.record(k, residual, L)
            break

        K = system.apply_preconditioned(S)
        kk = inner(K, K)
        omega = inner(K, S) / kk if kk >= BREAKDOWN_TINY else 0.0
        if omega == 0.0:
            # no stabilizing step possible: keep the BiCG half update, then reset
            history.breakdowns += 1
            L = L + alpha * P
            R = S
            residual = s_norm
            k += 1
            rec.record(k, residual, L)
            restart(R)
            continue

        L = L + alpha * P + omega * S
        R_next = S - omega * K
        rho_next = inner(R_next, shadow)
        beta = (alpha / omega) * rho_next / rho
        P = R_next + beta * (P - omega * D)
        R = R_next
        rho = rho_next
        if abs(rho_next) <= config.epsilon0:
            history.restarts += 1
            restart(R)
        k += 1
        residual = norm(R)
        rec.record(k, residual, L)

    rec.finish(status)
    return L, history
