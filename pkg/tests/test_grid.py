import numpy as np
import pytest

from qlab import grid as G, heis
from qlab.errors import EmptyMask, MeasureDegenerate, OutOfDomain
from qlab.io import read_field, write_field, write_field_csv


@pytest.fixture
def cube16():
    return G.Grid.cube(1.0, 16)


class TestDerivatives:
    def test_exact_on_coordinates(self, cube16):
        pts = cube16.points()
        d1 = G.apply_horizontal_derivative(pts[..., 0], 1, grid=cube16)
        d2 = G.apply_horizontal_derivative(pts[..., 0], 2, grid=cube16)
        assert np.max(np.abs(d1 - 1.0)) < 1e-13
        assert np.max(np.abs(d2)) < 1e-13

    def test_frame_coefficients_on_z(self, cube16):
        # X1 z = -y/2, X2 z = x/2 exactly (z affine in the z-axis variable)
        pts = cube16.points()
        d1 = G.apply_horizontal_derivative(pts[..., 2], 1, grid=cube16)
        d2 = G.apply_horizontal_derivative(pts[..., 2], 2, grid=cube16)
        assert np.max(np.abs(d1 + pts[..., 1] / 2)) < 1e-13
        assert np.max(np.abs(d2 - pts[..., 0] / 2)) < 1e-13

    def test_exact_on_quadratics(self):
        g = G.Grid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (10, 10, 10))
        x = g.points()[..., 0]
        d = G.apply_horizontal_derivative(x * x, 1, grid=g)
        assert np.max(np.abs(d - 2 * x)) < 1e-12

    def test_consistency_order(self):
        # sup-norm error O(h^2) on a smooth closed form, slope >= 1.8
        errs, hs = [], []
        for n in (16, 32, 64):
            g = G.Grid.cube(1.0, n)
            pts = g.points()
            x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
            u = np.sin(x) * np.cos(y) + np.sin(2 * z)
            exact = np.cos(x) * np.cos(y) - y / 2 * 2 * np.cos(2 * z)
            got = G.apply_horizontal_derivative(u, 1, grid=g)
            errs.append(np.max(np.abs(got - exact)))
            hs.append(g.h[0])
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.8

    def test_eps_scaling(self, cube16):
        z = cube16.points()[..., 2]
        d = G.apply_horizontal_derivative(z, 3, eps=0.5, grid=cube16)
        assert np.max(np.abs(d - 0.5)) < 1e-13


class TestAdjoint:
    def test_exact_transposition_any_measure(self, cube16):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(cube16.n)
        v = rng.standard_normal(cube16.n)
        om = np.exp(cube16.points()[..., 0]) + 0.3
        for i in (1, 2, 3):
            lhs = G.inner_product(
                G.apply_horizontal_derivative(u, i, eps=0.7, grid=cube16), v, measure=om, grid=cube16
            )
            rhs = G.inner_product(
                u, G.adjoint_derivative(v, i, eps=0.7, measure=om, grid=cube16), measure=om, grid=cube16
            )
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_divergence_free_interior(self, cube16):
        # adjoint of the constant field vanishes away from the face collar
        ones = np.ones(cube16.n)
        inner = (slice(3, -3),) * 3
        for i in (1, 2):
            out = G.adjoint_derivative(ones, i, grid=cube16)
            assert np.max(np.abs(out[inner])) < 1e-13

    def test_column_sum_matrix_oracle(self):
        # assemble the operator matrix on a tiny grid; interior column sums vanish
        g = G.Grid.cube(1.0, 8)
        n3 = 8**3
        cols = np.zeros(n3)
        for j in range(n3):
            e = np.zeros(n3)
            e[j] = 1.0
            cols[j] = G.apply_horizontal_derivative(e.reshape(g.n), 1, grid=g).sum()
        cols = cols.reshape(g.n)
        assert np.max(np.abs(cols[3:-3, 3:-3, 3:-3])) < 1e-13

    def test_symbolic_adjoint_refinement(self):
        # omega = e^x: X1* v agrees with the symbolic -omega^{-1} X1(omega v)
        # (= -X1 v - v here) at order >= 1.8
        import sympy as sp

        sx, sy, sz = sp.symbols("x y z")
        v_sym = sp.sin(sx + sy / 2) * sp.cos(sz)
        om_sym = sp.exp(sx)
        x1 = lambda f: sp.diff(f, sx) - sy / 2 * sp.diff(f, sz)
        adj_sym = sp.simplify(-(x1(om_sym * v_sym)) / om_sym)
        adj_fn = sp.lambdify((sx, sy, sz), adj_sym, "numpy")
        v_fn = sp.lambdify((sx, sy, sz), v_sym, "numpy")

        errs, hs = [], []
        for n in (16, 32, 64):
            g = G.Grid.cube(1.0, n)
            pts = g.points()
            om = np.exp(pts[..., 0])
            v = v_fn(pts[..., 0], pts[..., 1], pts[..., 2])
            got = G.adjoint_derivative(v, 1, measure=om, grid=g)
            exact = adj_fn(pts[..., 0], pts[..., 1], pts[..., 2])
            inner = (slice(3, -3),) * 3
            errs.append(np.max(np.abs((got - exact)[inner])))
            hs.append(g.h[0])
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 1.8

    def test_nonpositive_measure_rejected(self, cube16):
        with pytest.raises(MeasureDegenerate):
            G.adjoint_derivative(np.ones(cube16.n), 1, measure=np.zeros(cube16.n), grid=cube16)


class TestIntegrate:
    def test_constant_on_unit_box(self):
        g = G.Grid((0, 0, 0), (1, 1, 1), (32, 32, 32))
        mask = G.full_box_mask(g)
        val = G.integrate(np.ones(g.n), mask=mask, grid=g)
        assert abs(val - 1.0) <= 2.0 / 32

    def test_odd_symmetry(self):
        g = G.Grid.cube(1.0, 24)
        mask = G.full_box_mask(g, margin=2)
        u = g.points()[..., 0] ** 3
        val = G.integrate(u, mask=mask, grid=g)
        assert abs(val) < 1e-10 * np.abs(u).max()

    def test_gauge_fourth_power_scaling(self):
        # integral of gauge^4 over gauge balls grows like r^(Q+4) with Q = 4
        g = G.Grid.cube(1.0, 48)
        gauge = heis.koranyi_gauge(g.points())
        vals, radii = [], [0.45, 0.55, 0.65, 0.78]
        for r in radii:
            mask = G.gauge_ball_mask((0, 0, 0), r, g)
            vals.append(G.integrate(gauge**4, mask=mask, grid=g))
        slope = np.polyfit(np.log(radii), np.log(vals), 1)[0]
        assert abs(slope - 8.0) <= 0.3

    def test_deterministic(self):
        g = G.Grid.cube(1.0, 20)
        rng = np.random.default_rng(2)
        u = rng.standard_normal(g.n)
        mask = G.gauge_ball_mask((0, 0, 0), 0.6, g)
        a = G.integrate(u, mask=mask, grid=g)
        b = G.integrate(u.copy(), mask=mask, grid=g)
        assert a == b


class TestMasks:
    def test_empty_on_tiny_radius(self):
        g = G.Grid.cube(1.0, 16)
        with pytest.raises(EmptyMask):
            G.gauge_ball_mask((0, 0, 0), 1e-6, g)

    def test_out_of_domain(self):
        g = G.Grid.cube(1.0, 16)
        with pytest.raises(OutOfDomain):
            G.gauge_ball_mask((0, 0, 0), 1.2, g)
        with pytest.raises(OutOfDomain):
            G.gauge_ball_mask((0.9, 0, 0), 0.5, g)

    def test_structure(self):
        g = G.Grid.cube(1.0, 24)
        mask = G.gauge_ball_mask((0, 0, 0), 0.6, g)
        assert not np.any(mask.interior & mask.boundary)
        assert mask.n_interior > 0
        # boundary encloses the interior: every axis neighbor of an interior
        # node is interior or boundary
        from scipy import ndimage

        grown = ndimage.binary_dilation(mask.interior, structure=G._AXIS_CROSS)
        assert np.all(mask.interior[grown & ~mask.interior] == False)  # noqa: E712
        assert np.all((grown & ~mask.interior) <= mask.boundary)

    def test_volume_growth_exponent(self):
        # mask volume scales like r^4 (homogeneous dimension); the z-adapted
        # box keeps enough z-layers in the thin balls for a clean fit
        g = G.Grid((-1, -1, -0.25), (1, 1, 0.25), (48, 48, 48))
        radii = [0.45, 0.55, 0.65, 0.78]
        vols = [G.gauge_ball_mask((0, 0, 0), r, g).n_interior for r in radii]
        slope = np.polyfit(np.log(radii), np.log(vols), 1)[0]
        assert abs(slope - 4.0) <= 0.2


class TestFieldIO:
    def test_roundtrip(self, tmp_path, cube16):
        rng = np.random.default_rng(4)
        f = G.ScalarField(cube16, rng.standard_normal(cube16.n))
        path = tmp_path / "field.field"
        write_field(f, path)
        back = read_field(path)
        assert back.grid == cube16
        assert np.array_equal(back.values, f.values)

    def test_header_format(self, tmp_path, cube16):
        f = G.ScalarField.constant(cube16, 1.0)
        path = tmp_path / "f.field"
        write_field(f, path)
        header = path.read_text().splitlines()[0]
        parts = header.split()
        assert parts[:2] == ["qlab-field", "v1"]
        assert [int(v) for v in parts[2:5]] == list(cube16.n)

    def test_x_fastest_order(self, tmp_path):
        g = G.Grid((0, 0, 0), (1, 1, 1), (8, 8, 8))
        f = G.ScalarField.from_function(g, lambda pts: pts[..., 0])
        path = tmp_path / "f.field"
        write_field(f, path)
        lines = path.read_text().splitlines()
        first_vals = [float(v) for v in lines[1:9]]
        assert np.allclose(first_vals, g.axis_coords(0))

    def test_csv(self, tmp_path, cube16):
        f = G.ScalarField.constant(cube16, 2.0)
        path = tmp_path / "f.csv"
        write_field_csv(f, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,z,value"
        assert len(lines) == 1 + 16**3
