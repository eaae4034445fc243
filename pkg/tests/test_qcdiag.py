import numpy as np
import pytest

from qlab import energy as E, grid as G, heis, qcdiag as Q
from qlab.errors import ContactViolation, DegenerateCondenser, MasksOverlap
from qlab.maps import MapSpec

std = heis.SubRiemannianMetric.standard()
P4 = E.OperatorParams(4.0, 0.0, 0.0)


class TestHorizontalDifferential:
    def test_identity(self):
        d = Q.horizontal_differential(MapSpec.identity(), (0.3, -0.2, 0.1))
        assert np.allclose(d, np.eye(2), atol=1e-12)

    def test_dilation(self):
        d = Q.horizontal_differential(MapSpec.dilation(2.0), (0.3, -0.2, 0.1))
        assert np.allclose(d, 2.0 * np.eye(2), atol=1e-12)

    def test_shear(self):
        d = Q.horizontal_differential(MapSpec.shear(2.0, 1.0), (0.3, -0.2, 0.1))
        assert np.allclose(d, np.diag([2.0, 1.0]), atol=1e-12)

    def test_fd_oracle(self):
        # finite differences of the closed-form map along frame directions
        m = MapSpec.rotation(0.5).then(MapSpec.dilation(1.5))
        p = np.array([0.2, 0.1, -0.05])
        got = Q.horizontal_differential(m, p)
        fr = heis.frame_at(p)
        fp = m.apply(p)
        t = 1e-6
        for i, v in enumerate((fr.v1, fr.v2)):
            w = (m.apply(p + t * v) - m.apply(p - t * v)) / (2 * t)
            c = np.array([w[0], w[1]])
            assert np.allclose(got[:, i], c, atol=1e-6)

    def test_chain_rule(self):
        rng = np.random.default_rng(0)
        f = MapSpec.dilation(2.0).then(MapSpec.rotation(0.4))
        g = MapSpec.shear(1.5, 0.8)
        comp = g.then(f)  # f o g
        for _ in range(10):
            p = rng.uniform(-0.5, 0.5, 3)
            lhs = Q.horizontal_differential(comp, p)
            rhs = Q.horizontal_differential(f, g.apply(p)) @ Q.horizontal_differential(g, p)
            assert np.allclose(lhs, rhs, atol=1e-8)

    def test_noncontact_rejected_at_construction(self):
        class Broken(MapSpec):
            def apply(self, p):  # vertical-only stretch: not contact
                out = np.asarray(p, dtype=float).copy()
                out[..., 2] *= 3.0
                return out

            def differential(self, p):
                j = np.zeros(np.asarray(p).shape[:-1] + (3, 3))
                j[..., 0, 0] = 1.0
                j[..., 1, 1] = 1.0
                j[..., 2, 2] = 3.0
                return j

        with pytest.raises(ContactViolation):
            Broken()


class TestSimilarity:
    def test_identity(self):
        res = Q.similarity_test(np.eye(2))
        assert res["is_similarity"] and abs(res["factor"] - 1.0) < 1e-12

    def test_scaled(self):
        res = Q.similarity_test(np.diag([2.0, 2.0]))
        assert res["is_similarity"] and abs(res["factor"] - 2.0) < 1e-12

    def test_not_similarity(self):
        res = Q.similarity_test(np.diag([2.0, 1.0]))
        assert not res["is_similarity"]
        assert np.isnan(res["factor"])
        assert abs(res["singular_ratio"] - 2.0) < 1e-12


class TestJacobianPopp:
    def test_identity(self):
        assert abs(Q.jacobian_popp(MapSpec.identity(), (0.1, 0.2, 0.0)) - 1.0) < 1e-12

    def test_dilation_volume_oracle(self):
        # Lebesgue volume ratio of a dilated box: dx dy dz scales by lam^4
        lam = 2.0
        assert abs(Q.jacobian_popp(MapSpec.dilation(lam), (0.1, 0.2, 0.0)) - lam**4) < 1e-10

    def test_shear_volume_oracle(self):
        assert abs(Q.jacobian_popp(MapSpec.shear(2.0, 1.0), (0.1, 0.2, 0.0)) - 4.0) < 1e-10

    def test_composed_with_probe_factor(self):
        # every battery-passing map satisfies J = factor^4
        for m in (MapSpec.dilation(0.5), MapSpec.rotation(1.0), MapSpec.left_translation((1, 2, 3))):
            p = np.array([0.05, -0.1, 0.02])
            d = Q.horizontal_differential(m, p)
            res = Q.similarity_test(d)
            assert res["is_similarity"]
            assert abs(Q.jacobian_popp(m, p) - res["factor"] ** 4) < 1e-9


class TestMorphism:
    @staticmethod
    def _image_fields(n=48):
        # image-side grid adapted to the support of the test fields; phi sits
        # compactly inside the image of the domain regions used below
        img_grid = G.Grid((-1.0, -1.0, -0.3), (1.0, 1.0, 0.3), (n, n, n))
        v_fn = Q.make_test_fields((0.0, 0.0, 0.0), 0.6)[1]
        phi_fn = Q.make_test_fields((0.1, 0.06, 0.02), 0.3)[0]
        v = G.ScalarField(img_grid, v_fn(img_grid.points()))
        phi = G.ScalarField(img_grid, phi_fn(img_grid.points()))
        return img_grid, v, phi

    def test_identity_exact(self):
        img_grid, v, phi = self._image_fields()
        region = G.gauge_ball_mask((0, 0, 0), 0.8, img_grid)
        out = Q.morphism_check(MapSpec.identity(), v, phi, region, P4, std)
        assert out["rel_err"] <= 1e-12

    def test_conformal_small(self):
        # trilinear pull-back converges at second order; the 2% target holds
        # from n = 96 and the error decreases under refinement
        errs = []
        for n in (48, 96):
            img_grid, v, phi = self._image_fields(n)
            dom_grid = G.Grid((-0.55, -0.55, -0.12), (0.55, 0.55, 0.12), (n, n, n))
            region = G.gauge_ball_mask((0, 0, 0), 0.45, dom_grid)
            out = Q.morphism_check(MapSpec.dilation(2.0), v, phi, region, P4, std)
            errs.append(out["rel_err"])
        assert errs[-1] <= 0.02
        assert errs[1] < errs[0]

    def test_shear_fails(self):
        img_grid, v, phi = self._image_fields()
        dom_grid = G.Grid((-0.85, -0.85, -0.25), (0.85, 0.85, 0.25), (48, 48, 48))
        region = G.gauge_ball_mask((0, 0, 0), 0.7, dom_grid)
        out = Q.morphism_check(MapSpec.shear(2.0, 1.0), v, phi, region, P4, std)
        assert out["rel_err"] >= 0.10


@pytest.fixture(scope="module")
def region():
    grid = G.Grid.cube(1.0, 32)
    return G.gauge_ball_mask((0, 0, 0), 0.7, grid)


class TestBattery:

    def test_identity_all_pass(self, region):
        rep = Q.condition_battery(MapSpec.identity(), region, P4, std, tol=0.05)
        assert rep.all_pass
        assert set(r["name"] for r in rep.to_list()) == set(Q.BATTERY_CONDITIONS)

    def test_conformal_pass(self, region):
        for m in (MapSpec.dilation(2.0), MapSpec.left_translation((0.2, -0.1, 0.05))):
            rep = Q.condition_battery(m, region, P4, std, tol=0.05)
            assert rep.all_pass, rep.records

    def test_shear_failure_signature(self, region):
        rep = Q.condition_battery(MapSpec.shear(2.0, 1.0), region, P4, std, tol=0.05)
        assert not rep.all_pass
        rec = rep.records
        assert abs(rec["HS"]["value"] - 2.0) <= 0.05 * 2.0 and not rec["HS"]["pass"]
        assert abs(rec["JP"]["value"] - 0.25) <= 0.05 and not rec["JP"]["pass"]
        assert not rec["EP"]["pass"]
        assert not rec["LP"]["pass"]

    def test_hs_iff_s(self, region):
        for m in (MapSpec.dilation(2.0), MapSpec.shear(2.0, 1.0)):
            rep = Q.condition_battery(m, region, P4, std, tol=0.05)
            assert rep.records["HS"]["pass"] == rep.records["S"]["pass"]
            assert rep.records["HS"]["value"] == rep.records["S"]["value"]

    def test_json_record_shape(self, region):
        rep = Q.condition_battery(MapSpec.identity(), region, P4, std, tol=0.05)
        for rec in rep.to_list():
            assert set(rec) == {"name", "value", "reference", "tol", "pass"}


class TestCapacity:
    def test_overlap_rejected(self):
        g = G.Grid((-1.0, -1.0, -0.2), (1.0, 1.0, 0.2), (24, 24, 24))
        e = G.gauge_ball_mask((0, 0, 0), 0.4, g)
        f = G.gauge_ball_mask((0.05, 0, 0), 0.4, g)
        assert np.any(e.interior & f.interior)
        with pytest.raises(MasksOverlap):
            Q.capacity(e, f, G.full_box_mask(g), P4, std)

    def test_degenerate_condenser(self):
        g = G.Grid.cube(1.0, 24)
        pts = g.points()
        e = G.mask_from_interior(g, pts[..., 0] < -0.02)
        f = G.mask_from_interior(g, pts[..., 0] > 0.02)
        with pytest.raises(DegenerateCondenser):
            Q.capacity(e, f, G.full_box_mask(g), P4, std)

    def test_monotone_in_plates(self):
        g = G.Grid((-1.3, -1.3, -0.45), (1.3, 1.3, 0.45), (32, 32, 32))
        N = heis.koranyi_gauge(g.points())
        f = G.mask_from_interior(g, N >= 1.05)
        dom = G.full_box_mask(g)
        caps = []
        for r in (0.35, 0.5):
            e = G.mask_from_interior(g, N <= r)
            caps.append(Q.capacity(e, f, dom, P4, std, tol=1e-7))
        assert caps[1] >= caps[0]

    def test_range_verified(self):
        out = Q.modulus_ring(0.5, 1.0, P4, std, n=28, full_output=True)
        assert out["range_ok"]


class TestModulusRing:
    def test_tight_ring_degenerate(self):
        with pytest.raises(DegenerateCondenser):
            Q.modulus_ring(0.9, 0.98, P4, std, n=20)

    def test_validation(self):
        with pytest.raises(ValueError):
            Q.modulus_ring(1.0, 0.5, P4, std)
