import numpy as np
import pytest

from pitsbicg.block_system import BlockOperatorContext, BlockSystem, assemble_dense_oracle
from pitsbicg.pde_core import PDECoefficients
from pitsbicg.solvers import (SolverConfig, parareal_solve, pitsbicg_solve,
                              sequential_fine_solve)
from pitsbicg.verify import tiny_context


class DenseSystem:
    """Stand-in exposing the solver-facing surface for a dense operator ``M``
    playing the role of ``G^{-1} F`` and ``b`` of ``G^{-1} B``."""

    def __init__(self, M, b):
        self.M, self.b = M, b
        self.N = len(b)
        self.fine_applications = 0
        self.coarse_applications = 0

    def zeros(self):
        return np.zeros((self.N, 1))

    def inner(self, a, b):
        return float(np.sum(a * b))

    def norm(self, a):
        return float(np.max(np.abs(a)))

    def assemble_rhs(self):
        return self.b[:, None].copy()

    def apply_preconditioned(self, L):
        self.fine_applications += 1
        return (self.M @ L[:, 0])[:, None]

    def preconditioned_residual(self, L, B):
        return B - self.apply_preconditioned(L)


def heat(N, points=7, T=None):
    return tiny_context(1, points, N, PDECoefficients(mu=1.0), T=T)


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.epsilon, cfg.epsilon0, cfg.max_iters) == (1e-8, 1e-12, 200)

    @pytest.mark.parametrize("eps,eps0", [(1e-12, 1e-8), (1e-8, 0.0), (1e-8, 1e-8)])
    def test_ordering(self, eps, eps0):
        with pytest.raises(ValueError):
            SolverConfig(epsilon=eps, epsilon0=eps0)


class TestSequential:
    def test_identity(self, rng):
        ctx = tiny_context(1, 6, 4, PDECoefficients(mu=0.0))
        exact = sequential_fine_solve(ctx)
        np.testing.assert_array_equal(exact, np.tile(ctx.y0, (4, 1)))

    def test_reaction_geometric(self):
        r = 1.5
        ctx = tiny_context(1, 4, 5, PDECoefficients(mu=0.0, r=r))
        s, dt = ctx.fine.steps_per_slab, ctx.fine.dt
        exact = sequential_fine_solve(ctx)
        for n in range(5):
            np.testing.assert_allclose(exact[n], ctx.y0 * (1 + r * dt) ** (-s * n), rtol=1e-13)

    def test_residual_identity(self):
        ctx = heat(4)
        system = BlockSystem(ctx)
        exact = sequential_fine_solve(system)
        assert system.norm(system.apply_F(exact) - system.assemble_rhs()) <= 1e-10


class TestParareal:
    def test_fixed_point(self):
        ctx = heat(4)
        exact = sequential_fine_solve(ctx)
        L, h = parareal_solve(BlockSystem(ctx), initial=exact)
        assert h.converged and h.iterations == 0
        assert h.records[0].fine_applications == 0
        np.testing.assert_array_equal(L, exact)

    def test_finite_termination(self):
        ctx = heat(8)
        exact = sequential_fine_solve(ctx)
        errors = {}

        def check(k, L):
            errors[k] = np.max(np.abs(L[:k + 1] - exact[:k + 1]))

        _, h = parareal_solve(BlockSystem(ctx), callback=check)
        assert h.converged and h.iterations <= ctx.N - 1
        assert max(errors.values()) <= 1e-10

    def test_cost_accounting(self):
        ctx = heat(6)
        _, h = parareal_solve(BlockSystem(ctx))
        for r in h.records:
            assert r.fine_applications == r.k * (ctx.N - 1)
            assert r.coarse_applications == r.k * (ctx.N - 1)
        assert h.total_fine == (h.iterations + 1) * (ctx.N - 1)

    def test_residual_decreasing(self):
        _, h = parareal_solve(BlockSystem(tiny_context(2, 9, 8, PDECoefficients(1.0))))
        assert all(b < a for a, b in zip(h.residuals, h.residuals[1:]))

    def test_max_iterations_is_soft(self):
        ctx = heat(8)
        _, h = parareal_solve(BlockSystem(ctx), SolverConfig(max_iters=2))
        assert h.status == "max_iterations" and h.iterations == 2


class TestPiTSBiCG:
    def test_fixed_point(self):
        ctx = heat(4)
        exact = sequential_fine_solve(ctx)
        system = BlockSystem(ctx)
        L, h = pitsbicg_solve(system, initial=exact)
        assert h.converged and h.iterations == 0 and len(h.records) == 1
        assert system.fine_applications == ctx.N - 1
        np.testing.assert_array_equal(L, exact)

    def test_two_slabs(self):
        ctx = heat(2)
        exact = sequential_fine_solve(ctx)
        L, h = pitsbicg_solve(BlockSystem(ctx), SolverConfig(epsilon=1e-10))
        assert h.converged and h.iterations <= 2
        assert BlockSystem(ctx).norm(L - exact) <= 1e-9

    def test_matches_dense_solve(self):
        ctx = heat(4)
        F, _ = assemble_dense_oracle(ctx)
        B = BlockSystem(ctx).assemble_rhs()
        dense = np.linalg.solve(F, B.ravel()).reshape(B.shape)
        L, h = pitsbicg_solve(BlockSystem(ctx), SolverConfig(epsilon=1e-11))
        assert h.converged
        np.testing.assert_allclose(L, dense, atol=1e-9)

    @pytest.mark.parametrize("coeffs", [PDECoefficients(1.0),
                                        PDECoefficients(1.0, 1.5),
                                        PDECoefficients(0.1, 0.5, "rotation")])
    @pytest.mark.parametrize("N", [2, 3, 5, 8])
    def test_finite_termination(self, coeffs, N):
        ctx = tiny_context(2, 7, N, coeffs, T=0.01 * N)
        _, h = pitsbicg_solve(BlockSystem(ctx))
        assert h.converged and h.iterations <= N

    def test_cost_accounting(self):
        ctx = tiny_context(2, 9, 8, PDECoefficients(0.1, 0.5, "rotation"))
        _, h = pitsbicg_solve(BlockSystem(ctx))
        for r in h.records:
            assert r.fine_applications == (2 * r.k + 1) * (ctx.N - 1)
            assert r.coarse_applications == (2 * r.k + 1) * (ctx.N - 1)
        assert [r.k for r in h.records] == sorted(set(r.k for r in h.records))

    def test_final_residual_honest(self):
        ctx = tiny_context(2, 9, 8, PDECoefficients(1.0, 1.5))
        system = BlockSystem(ctx)
        for solve in (parareal_solve, pitsbicg_solve):
            L, h = solve(system)
            recomputed = system.norm(system.preconditioned_residual(L))
            assert abs(recomputed - h.final_residual) <= 1e-12

    def test_shared_fixed_point(self):
        ctx = tiny_context(2, 9, 8, PDECoefficients(0.1, 0.5, "rotation"))
        system = BlockSystem(ctx)
        exact = sequential_fine_solve(system)
        eps = 1e-8
        for solve in (parareal_solve, pitsbicg_solve):
            L, h = solve(system, SolverConfig(epsilon=eps))
            assert h.converged and system.norm(L - exact) <= 10 * eps

    def test_first_residual_equivalence(self):
        ctx = heat(5)
        _, hp = parareal_solve(BlockSystem(ctx))
        _, hb = pitsbicg_solve(BlockSystem(ctx))
        assert np.array_equal(hp.initial_residual, hb.initial_residual)

    def test_restart_branch(self):
        # tiny data drives <R, R~> under epsilon0 so the shadow resets every iteration
        ctx = tiny_context(2, 9, 6, PDECoefficients(1.0))
        small = BlockOperatorContext(ctx.partition, ctx.fine, ctx.coarse, 1e-5 * ctx.y0)
        system = BlockSystem(small)
        exact = sequential_fine_solve(system)
        L, h = pitsbicg_solve(system, SolverConfig(epsilon=1e-12, epsilon0=1e-13))
        assert h.converged and h.restarts > 0
        assert system.norm(L - exact) <= 1e-10

    def test_deterministic(self):
        ctx = tiny_context(2, 9, 8, PDECoefficients(0.1, 0.5, "rotation"))
        runs = [pitsbicg_solve(BlockSystem(ctx))[1].residuals for _ in range(2)]
        assert runs[0] == runs[1]


class TestBreakdownGuards:
    def test_orthogonal_direction(self):
        # skew operator: <M p, p> = 0 for every p, so alpha's denominator vanishes
        M = np.array([[0.0, 1.0], [-1.0, 0.0]])
        system = DenseSystem(M, np.array([1.0, 0.0]))
        L, h = pitsbicg_solve(system, SolverConfig(max_iters=5), initial=np.zeros((2, 1)))
        assert h.status == "max_iterations"
        assert h.breakdowns == 5
        assert np.all(np.isfinite(L))

    def test_half_step_exit(self):
        # identity operator: the first half step is exact
        system = DenseSystem(np.eye(3), np.array([1.0, 2.0, 3.0]))
        L, h = pitsbicg_solve(system, initial=np.zeros((3, 1)))
        assert h.converged and h.half_step_exit and h.iterations == 0.5
        np.testing.assert_allclose(L[:, 0], [1.0, 2.0, 3.0])
        assert h.total_fine == 2

    def test_random_nonsymmetric(self, rng):
        n = 12
        M = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
        b = rng.standard_normal(n)
        L, h = pitsbicg_solve(DenseSystem(M, b), SolverConfig(epsilon=1e-12, epsilon0=1e-14),
                              initial=np.zeros((n, 1)))
        assert h.converged
        np.testing.assert_allclose(L[:, 0], np.linalg.solve(M, b), atol=1e-10)
