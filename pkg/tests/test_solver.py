import numpy as np
import pytest

from qlab import energy as E, grid as G, heis, solver as S

std = heis.SubRiemannianMetric.standard()


@pytest.fixture(scope="module")
def setup():
    g = G.Grid.cube(1.0, 28)
    mask = G.gauge_ball_mask((0, 0, 0), 0.55, g)
    return g, mask


class TestSublaplacian:
    def test_constant_boundary(self, setup):
        g, mask = setup
        u = S.solve_sublaplacian(mask, np.full(g.n, 3.25), std)
        assert np.max(np.abs(u.values - 3.25)) < 1e-9

    def test_coordinate_boundary(self, setup):
        g, mask = setup
        x = g.points()[..., 0]
        u = S.solve_sublaplacian(mask, x, std)
        assert np.max(np.abs(u.values - x)[mask.interior]) < 1e-9

    def test_perturbed_metric(self, setup):
        g, mask = setup
        pert = heis.SubRiemannianMetric.diagonal_poly([1, 0, 0.25], [1], volume="lebesgue")
        x = g.points()[..., 0]
        u = S.solve_sublaplacian(mask, x, pert)
        assert np.max(np.abs(u.values - x)[mask.interior]) > 1e-4
        res = E.weak_residual(u.values, mask, E.OperatorParams(2.0, 0.0, 0.0), pert)
        assert E.residual_norm(res, mask, pert) <= 1e-9


class TestPLaplacian:
    def test_coordinate_boundary_all_p(self, setup):
        g, mask = setup
        x = g.points()[..., 0]
        for p_exp in (2.0, 3.0, 4.0):
            sol, rep = S.solve_plaplacian(
                mask, x, E.OperatorParams(p_exp, 0.0, 0.0), std, with_monitors=False
            )
            assert np.max(np.abs(sol.values - x)[mask.interior]) <= 1e-8
            assert rep.final_residual <= 1e-9
            assert rep.delta_floor_applied == (p_exp > 2)

    def test_p2_matches_sublaplacian(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] + 0.5 * pts[..., 1] - 0.2 * pts[..., 0] * pts[..., 1]
        lin = S.solve_sublaplacian(mask, bdata, std)
        sol, _ = S.solve_plaplacian(
            mask, bdata, E.OperatorParams(2.0, 0.0, 0.0), std, tol=1e-11, with_monitors=False
        )
        assert np.max(np.abs(sol.values - lin.values)[mask.interior]) <= 1e-8

    def test_solver_contract_residual(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] * pts[..., 1] + 0.3 * pts[..., 1]
        par = E.OperatorParams(4.0, 0.05, 0.2)
        sol, rep = S.solve_plaplacian(mask, bdata, par, std, tol=1e-9, with_monitors=False)
        res = E.weak_residual(sol.values, mask, par, std)
        assert E.residual_norm(res, mask, std) <= 1e-9

    def test_minimality(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] + 0.4 * pts[..., 1] ** 2
        par = E.OperatorParams(4.0, 0.1, 0.0)
        sol, _ = S.solve_plaplacian(mask, bdata, par, std, with_monitors=False)
        e0 = E.q_energy(sol.values, mask, par, std)
        rng = np.random.default_rng(3)
        for _ in range(100):
            phi = np.where(mask.interior, rng.standard_normal(g.n), 0.0)
            for t in (1e-3, -1e-3, 1e-2, -1e-2):
                assert E.q_energy(sol.values + t * phi, mask, par, std) >= e0 - 1e-12

    def test_uniqueness_random_inits(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] + 0.3 * pts[..., 1]
        par = E.OperatorParams(4.0, 0.01, 0.0)
        rng = np.random.default_rng(5)
        tol = 1e-9
        sols = []
        for seed in (1, 2):
            init = bdata + np.where(mask.interior, 0.5 * rng.standard_normal(g.n), 0.0)
            sol, _ = S.solve_plaplacian(
                mask, bdata, par, std, tol=tol, initial=init, with_monitors=False
            )
            sols.append(sol.values)
        assert np.max(np.abs(sols[0] - sols[1])[mask.interior]) <= 10 * tol * 100

    def test_comparison_principle(self, setup):
        g, mask = setup
        pts = g.points()
        h = max(g.h)
        for bdata in (pts[..., 0], pts[..., 0] * pts[..., 1] + 0.2 * pts[..., 1]):
            sol, _ = S.solve_plaplacian(
                mask, bdata, E.OperatorParams(4.0, 0.01, 0.1), std, with_monitors=False
            )
            pinned = mask.boundary
            lo, hi = bdata[pinned].min(), bdata[pinned].max()
            assert sol.values[mask.interior].min() >= lo - 10 * h
            assert sol.values[mask.interior].max() <= hi + 10 * h


class TestSweep:
    def test_single_entry_matches_solve(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] + 0.2 * pts[..., 1]
        par = E.OperatorParams(4.0, 1.0, 1.0)
        reports = S.continuation_sweep(mask, bdata, [(0.5, 0.5)], par, std)
        sol, rep = S.solve_plaplacian(mask, bdata, par.replace(eps=0.5, delta=0.5), std)
        assert len(reports) == 1
        assert abs(reports[0].final_energy - rep.final_energy) <= 1e-9 * max(
            1.0, rep.final_energy
        )

    def test_monotone_schedule_required(self, setup):
        g, mask = setup
        with pytest.raises(ValueError):
            S.continuation_sweep(mask, np.zeros(g.n), [(0.5, 0.5), (1.0, 1.0)], E.OperatorParams())

    def test_coordinate_boundary_monitors_flat(self, setup):
        # exact solution x: |grad u| constant, lip_ratio identical across stages
        g, mask = setup
        x = g.points()[..., 0]
        reports = S.continuation_sweep(
            mask, x, [(0.5, 0.5), (0.25, 0.25)], E.OperatorParams(4.0, 1.0, 1.0), std
        )
        lips = [r.lip_ratio for r in reports]
        assert all(np.isfinite(lips))
        # |grad_eps x| = 1 everywhere, so only the delta in the average moves
        assert abs(lips[0] - lips[1]) < 0.2 * lips[0]

    def test_monitor_boundedness(self, setup):
        g, mask = setup
        pts = g.points()
        bdata = pts[..., 0] + 0.4 * pts[..., 1] - 0.3 * pts[..., 0] * pts[..., 1]
        schedule = [(1.0, 1.0), (0.5, 0.5), (0.25, 0.25), (0.125, 0.125), (0.0625, 0.0625)]
        reports = S.continuation_sweep(mask, bdata, schedule, E.OperatorParams(4.0, 1.0, 1.0), std)
        for name in ("lip_ratio", "caccioppoli_ratio", "holder_seminorm"):
            vals = [getattr(r, name) for r in reports]
            assert all(np.isfinite(vals))
            assert max(vals) <= 3.0 * vals[0]
