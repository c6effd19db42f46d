"""Parallel-in-time solvers for linear evolution problems.

PiTSBiCG (preconditioned stabilized bi-conjugate gradient on the time-slab
continuity system) and parareal, with finite-difference
advection-diffusion-reaction test problems.
"""
from .block_system import (BlockOperatorContext, BlockSystem, assemble_dense_coarse,
                           assemble_dense_oracle, block_inner_product, block_norm_N_inf)
from .executor import SlabExecutor, timing_report
from .pde_core import (PDECoefficients, SpatialGrid, SpatialOperator,
                       assemble_spatial_operator, backward_euler_step,
                       gaussian_initial_condition, inner_product)
from .propagators import Propagator, TimeSlabPartition, make_coarse, make_fine
from .solvers import (ConvergenceHistory, SolverConfig, parareal_solve, pitsbicg_solve,
                      sequential_fine_solve)

__version__ = "0.1.0"
