import numpy as np
import pytest

from hawkesnet.errors import ArgumentError
from hawkesnet.kernels import Exponential, KernelSpec, kernel_eval
from hawkesnet.moments import SecondOrderStats, StatGrid, build_grid, estimate_second_order
from hawkesnet.simulate import SimConfig, simulate
from hawkesnet.wienerhopf import wh_apply_forward, wh_reconstruct, wh_solve


def flat_stats(D=1, M=1, nb=12, value=0.0, rates=None, T=10.0):
    grid = StatGrid(points=np.geomspace(0.01, T, nb + 1))
    return SecondOrderStats(
        rates=np.asarray(rates) if rates is not None else np.ones(D),
        pmfs=np.full((D, M), 1.0 / M),
        grid=grid,
        g=np.full((D, D, nb, M), value),
        n_conditioning=np.full((D, M), 1000, dtype=np.int64),
        flagged=np.zeros((D, M), dtype=bool),
    )


class TestSolve:
    def test_zero_statistics_give_zero_kernel(self):
        stats = flat_stats(D=2, value=0.0)
        sol = wh_solve(stats, Q=32)
        np.testing.assert_allclose(sol.phi, 0.0, atol=1e-12)

    def test_grid_properties(self):
        sol = wh_solve(flat_stats(), Q=50)
        assert sol.nodes[0] == 0.0
        assert sol.nodes[-1] == 10.0
        assert sol.delta == pytest.approx(10.0 / 49)

    def test_round_trip_exact(self):
        # forward-apply then solve recovers the kernel to solver precision
        rng = np.random.default_rng(4)
        for D, M, Q in [(1, 1, 16), (2, 2, 12), (3, 3, 8), (2, 1, 2)]:
            stats = flat_stats(D=D, M=M, value=0.3, rates=rng.uniform(0.5, 2.0, D))
            g = rng.normal(0.5, 0.3, size=stats.g.shape)
            stats = SecondOrderStats(
                rates=stats.rates, pmfs=stats.pmfs, grid=stats.grid, g=g,
                n_conditioning=stats.n_conditioning, flagged=stats.flagged,
            )
            alphas = rng.uniform(0.1, 0.6, size=(D, D))

            def phi_eval(i, k, t, z):
                return alphas[i - 1, k - 1] * np.exp(-2.0 * np.asarray(t)) * (1 + 0.1 * z)

            nodes, g_syn = wh_apply_forward(stats, phi_eval, Q=Q)
            sol = wh_solve(stats, Q=Q, g_nodal=g_syn)
            for i in range(1, D + 1):
                for k in range(1, D + 1):
                    for z in range(1, M + 1):
                        np.testing.assert_allclose(
                            sol.phi[i - 1, k - 1, :, z - 1], phi_eval(i, k, nodes, z), atol=1e-8
                        )

    def test_q_refinement_improves_smooth_recovery(self, exp_spec_1d):
        stream = simulate(SimConfig(spec=exp_spec_1d, horizon=2_000_000.0, seed=3))
        stats = estimate_second_order(stream, build_grid(0.1, 10, 50, 10.0))
        errs = []
        for Q in (50, 100, 200):
            sol = wh_solve(stats, Q=Q)
            true = kernel_eval(exp_spec_1d, 1, 1, sol.nodes, 1)
            sel = sol.nodes >= 0.05  # below the first bins the nodal values extrapolate
            errs.append(np.sqrt(np.mean((sol.phi[0, 0, sel, 0] - true[sel]) ** 2)))
        assert errs[2] < errs[0]

    def test_too_few_nodes_rejected(self):
        with pytest.raises(ArgumentError):
            wh_solve(flat_stats(), Q=1)


class TestReconstruct:
    def test_zero_h_reconstruction_equals_statistics(self):
        stats = flat_stats(value=0.0)
        sol = wh_solve(stats, Q=16)
        assert wh_reconstruct(sol, 1, 1, 5.0, 1) == pytest.approx(0.0, abs=1e-12)

    def test_nodal_self_consistency(self):
        rng = np.random.default_rng(9)
        stats = flat_stats(D=2, value=0.2, rates=[1.0, 2.0])
        g = rng.normal(0.4, 0.2, size=stats.g.shape)
        stats = SecondOrderStats(
            rates=stats.rates, pmfs=stats.pmfs, grid=stats.grid, g=g,
            n_conditioning=stats.n_conditioning, flagged=stats.flagged,
        )
        sol = wh_solve(stats, Q=24)
        for i, j in [(1, 1), (1, 2), (2, 1)]:
            rec = wh_reconstruct(sol, i, j, sol.nodes, 1)
            np.testing.assert_allclose(rec, sol.phi[i - 1, j - 1, :, 0], atol=1e-8)

    def test_domain_guard(self):
        sol = wh_solve(flat_stats(), Q=8)
        with pytest.raises(ArgumentError):
            wh_reconstruct(sol, 1, 1, 11.0, 1)
