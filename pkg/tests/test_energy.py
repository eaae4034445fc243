import numpy as np
import pytest

from qlab import energy as E, grid as G, heis
from qlab.errors import EmptyMask

std = heis.SubRiemannianMetric.standard()


@pytest.fixture(scope="module")
def ball32():
    g = G.Grid.cube(1.0, 32)
    return g, G.gauge_ball_mask((0, 0, 0), 0.55, g)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            E.OperatorParams(p_exp=1.5)
        with pytest.raises(ValueError):
            E.OperatorParams(delta=-1)
        with pytest.raises(ValueError):
            E.StructureBounds(lam=2.0, Lam=1.0)


class TestFlux:
    def test_zero_gradient(self):
        a = E.flux_A((0.1, 0.2, 0.0), (0.0, 0.0, 0.0), E.OperatorParams(4.0, 0.0, 0.0), std)
        assert np.allclose(a, 0.0)

    def test_cubic_flux(self):
        a = E.flux_A((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), E.OperatorParams(4.0, 0.0, 0.0), std)
        assert np.allclose(a, (1.0, 0.0, 0.0))

    def test_linear_at_p2(self):
        rng = np.random.default_rng(0)
        par = E.OperatorParams(2.0, 0.3, 0.5)
        x = rng.uniform(-1, 1, 3)
        xi, eta = rng.standard_normal((2, 3))
        lhs = E.flux_A(x, 2.0 * xi + 3.0 * eta, par, std)
        rhs = 2.0 * E.flux_A(x, xi, par, std) + 3.0 * E.flux_A(x, eta, par, std)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_monotone(self):
        rng = np.random.default_rng(1)
        for delta in (0.0, 0.2):
            par = E.OperatorParams(4.0, delta, 0.3)
            x = rng.uniform(-1, 1, (100, 3))
            xi = rng.standard_normal((100, 3))
            dots = np.sum(xi * E.flux_A(x, xi, par, std), axis=-1)
            assert np.all(dots > 0)
            zero = E.flux_A(x, np.zeros_like(xi), par, std)
            assert np.allclose(zero, 0.0)


class TestStructureBounds:
    def test_standard_p4(self):
        res = E.structure_bounds_check(E.OperatorParams(4.0, 0.0, 0.0), std, samples=2000, seed=3)
        # symbolic oracle: eigenvalues of d(|xi|^2 xi) are |xi|^2 and 3 |xi|^2
        assert res["lambda_est"] >= 1.0 - 1e-4
        assert res["Lambda_est"] <= 3.0 + 1e-4
        assert res["pass"]

    def test_positive_lower_bound_at_zero(self):
        # delta > 0 keeps the quadratic form positive at xi = 0
        par = E.OperatorParams(4.0, 0.5, 0.0)
        jac = np.zeros((3, 3))
        step = 1e-6
        for j in range(3):
            d = np.zeros(3)
            d[j] = step
            jac[:, j] = (
                E.flux_A(np.zeros(3), d, par, std) - E.flux_A(np.zeros(3), -d, par, std)
            ) / (2 * step)
        eig = np.linalg.eigvalsh(0.5 * (jac + jac.T))
        assert eig[0] >= 0.9 * par.delta ** ((par.p_exp - 2) / 2)

    def test_variable_omega_x_derivative(self):
        # |d_x A| bound with the symbolic x-derivative as oracle at samples
        import sympy as sp

        metric = heis.SubRiemannianMetric.diagonal_poly([1.0], [1.0], volume="lebesgue")
        metric = heis.SubRiemannianMetric(
            g=metric.g, omega=lambda p: 1.0 + np.asarray(p)[..., 0] ** 2 / 10.0
        )
        par = E.OperatorParams(4.0, 0.1, 0.0)
        res = E.structure_bounds_check(par, metric, samples=1500, seed=5)
        assert res["pass"]
        sx = sp.Symbol("x")
        xi_val = np.array([0.7, -0.4, 0.2])
        s_val = par.delta + float(np.sum(xi_val**2))
        a1 = (1 + sx**2 / 10) * s_val * xi_val[0]
        oracle = float(sp.diff(a1, sx).subs(sx, 0.8))
        num = (
            E.flux_A((0.8 + 1e-6, 0, 0), xi_val, par, metric)
            - E.flux_A((0.8 - 1e-6, 0, 0), xi_val, par, metric)
        )[0] / 2e-6
        assert abs(num - oracle) < 1e-5 * max(1.0, abs(oracle))
        assert abs(oracle) <= res["Lambda_est"] * s_val ** ((par.p_exp - 1) / 2) * (1 + 1e-9)

    def test_sweep_stability(self):
        vals = []
        for eps in (1.0, 0.1, 0.01):
            for delta in (1.0, 0.1, 0.01):
                res = E.structure_bounds_check(
                    E.OperatorParams(4.0, delta, eps), std, samples=800, seed=11
                )
                vals.append((res["lambda_est"], res["Lambda_est"]))
        lams = [v[0] for v in vals]
        Lams = [v[1] for v in vals]
        assert (max(lams) - min(lams)) / max(lams) < 0.1
        assert (max(Lams) - min(Lams)) / max(Lams) < 0.1


class TestEnergy:
    def test_constant_field(self, ball32):
        g, mask = ball32
        par = E.OperatorParams(3.0, 0.2, 0.0)
        vol = np.count_nonzero(mask.quad_region) * g.cell_volume
        val = E.q_energy(np.full(g.n, 2.5), mask, par, std)
        assert abs(val - 0.2 ** (par.p_exp / 2) * vol) < 1e-12
        par0 = E.OperatorParams(3.0, 0.0, 0.0)
        assert E.q_energy(np.full(g.n, 2.5), mask, par0, std) == 0.0

    def test_coordinate_field(self, ball32):
        g, mask = ball32
        par = E.OperatorParams(4.0, 0.0, 0.0)
        vol = np.count_nonzero(mask.quad_region) * g.cell_volume
        val = E.q_energy(g.points()[..., 0], mask, par, std)
        assert abs(val - vol) < 1e-12

    def test_empty_mask(self, ball32):
        g, mask = ball32
        bad = G.Mask(g, np.zeros(g.n, bool), np.zeros(g.n, bool))
        with pytest.raises(EmptyMask):
            E.q_energy(np.ones(g.n), bad, E.OperatorParams(), std)

    def test_midpoint_convexity(self, ball32):
        g, mask = ball32
        rng = np.random.default_rng(7)
        par = E.OperatorParams(4.0, 0.1, 0.2)
        worst = 0.0
        for _ in range(1000):
            u = rng.standard_normal(g.n) * 0.5
            v = rng.standard_normal(g.n) * 0.5
            mid = E.q_energy(0.5 * (u + v), mask, par, std)
            avg = 0.5 * (E.q_energy(u, mask, par, std) + E.q_energy(v, mask, par, std))
            worst = max(worst, mid - avg)
        assert worst <= 1e-10


class TestPairing:
    def test_constant_phi(self, ball32):
        g, mask = ball32
        rng = np.random.default_rng(9)
        u = rng.standard_normal(g.n)
        val = E.pairing_IQ(u, np.full(g.n, 3.0), mask, E.OperatorParams(4.0, 0.0, 0.0), std)
        assert abs(val) < 1e-12

    def test_matches_energy(self, ball32):
        g, mask = ball32
        rng = np.random.default_rng(10)
        u = rng.standard_normal(g.n)
        par = E.OperatorParams(4.0, 0.0, 0.0)
        assert E.pairing_IQ(u, u, mask, par, std) == E.q_energy(u, mask, par, std)

    def test_hoelder_bound(self, ball32):
        g, mask = ball32
        rng = np.random.default_rng(11)
        par = E.OperatorParams(4.0, 0.0, 0.0)
        q = par.p_exp
        for _ in range(25):
            u = rng.standard_normal(g.n)
            phi = rng.standard_normal(g.n)
            lhs = abs(E.pairing_IQ(u, phi, mask, par, std))
            bound = E.q_energy(u, mask, par, std) ** ((q - 1) / q) * E.q_energy(
                phi, mask, par, std
            ) ** (1 / q)
            assert lhs <= bound * (1 + 1e-12)


class TestWeakResidual:
    def test_coordinate_is_harmonic(self, ball32):
        g, mask = ball32
        x = g.points()[..., 0]
        for p_exp in (2.0, 3.0, 4.0):
            res = E.weak_residual(x, mask, E.OperatorParams(p_exp, 0.0, 0.0), std)
            assert np.max(np.abs(res.values)) < 1e-10

    def test_gradient_identity(self, ball32):
        # the residual is the exact energy gradient: directional derivatives
        # match central finite differences of the energy
        g, mask = ball32
        rng = np.random.default_rng(13)
        par = E.OperatorParams(4.0, 0.05, 0.1)
        u = g.points()[..., 0] + 0.3 * rng.standard_normal(g.n)
        res = E.weak_residual(u, mask, par, std)
        om = std.omega_at(g.points())
        for _ in range(5):
            phi = np.where(mask.interior, rng.standard_normal(g.n), 0.0)
            t = 1e-5
            fd = (E.q_energy(u + t * phi, mask, par, std) - E.q_energy(u - t * phi, mask, par, std)) / (2 * t)
            pairing = float(np.sum(res.values * phi * om) * g.cell_volume)
            assert abs(fd - pairing) <= 1e-6 * max(1.0, abs(fd))
