import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacdesign import ci
from isacdesign.errors import DomainError
from isacdesign.model import Constellation, desk_scenario
from isacdesign.oracle import ci_member

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def cvec(n):
    return st.lists(st.tuples(finite, finite), min_size=n, max_size=n).map(
        lambda v: np.array([a + 1j * b for a, b in v]))


TAGS = [ci.PSK_CONE, ci.EXACT_A, ci.EDGE_B, ci.CORNER_C, ci.EDGE_D]


def _instance(tag, quad, h, center, scale=1.0):
    if tag == ci.PSK_CONE:
        region, s_d = ci.CIRegion(tag, 0, np.pi / 4), np.exp(1j * np.pi / 4)
    else:
        sr, si = {1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}[quad]
        region, s_d = ci.CIRegion(tag, quad), complex(0.5 * sr, 0.7 * si)
    return ci.CIInstance(h, s_d, scale, region, center)


class TestClassify:
    def test_sixteen_qam_classes(self):
        const = Constellation("qam", 16)
        tags = [ci.classify_point(const, p).tag for p in const.points]
        counts = {t: tags.count(t) for t in set(tags)}
        assert counts == {ci.CORNER_C: 4, ci.EXACT_A: 4, ci.EDGE_B: 4, ci.EDGE_D: 4}

    def test_psk_region_carries_half_angle(self):
        const = Constellation("psk", 8)
        r = ci.classify_point(const, const.points[3])
        assert r.tag == ci.PSK_CONE and r.phi == pytest.approx(np.pi / 8)

    def test_non_member_rejected(self):
        with pytest.raises(DomainError):
            ci.classify_point(Constellation("psk", 4), 1.0 + 0j)

    def test_corner_quadrants(self):
        const = Constellation("qam", 16)
        corner = const.points[np.argmax(const.points.real + const.points.imag)]
        assert ci.classify_point(const, corner) == ci.CIRegion(ci.CORNER_C, 1)


class TestProjection:
    @pytest.mark.parametrize("tag", TAGS)
    @pytest.mark.parametrize("quad", [1, 2, 3, 4])
    def test_result_is_feasible(self, tag, quad, rng):
        for _ in range(20):
            h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            c = 2 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
            inst = _instance(tag, quad, h, c, scale=1.3)
            q = ci.project(inst)
            assert ci.is_feasible(inst, q)
            r = inst.region
            assert ci_member(r.tag, r.quadrant, r.phi, inst.s_d, 1.3, inst.h @ q, tol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(h=cvec(3), c=cvec(3), other=cvec(3), tag=st.sampled_from(TAGS), quad=st.integers(1, 4))
    def test_nearest_among_feasible_points(self, h, c, other, tag, quad):
        if np.linalg.norm(h) < 1e-3:
            return
        inst = _instance(tag, quad, h, c)
        q = ci.project(inst)
        # any other feasible point is at least as far from the center
        q_other = ci.project(_instance(tag, quad, h, other))
        assert np.linalg.norm(q - c) <= np.linalg.norm(q_other - c) + 1e-9

    @settings(max_examples=60, deadline=None)
    @given(h=cvec(2), c=cvec(2), tag=st.sampled_from(TAGS), quad=st.integers(1, 4))
    def test_idempotent_and_moves_along_conj_h(self, h, c, tag, quad):
        if np.linalg.norm(h) < 1e-3:
            return
        inst = _instance(tag, quad, h, c)
        q = ci.project(inst)
        q2 = ci.project(_instance(tag, quad, h, q))
        assert np.allclose(q, q2, atol=1e-9)
        d = q - c
        # the step is a complex multiple of conj(h)
        coef = np.vdot(np.conj(h), d) / np.vdot(h, h).real
        assert np.allclose(d, coef * np.conj(h), atol=1e-9)

    def test_feasible_center_unchanged(self):
        h = np.array([1.0, 0.5j])
        inst = _instance(ci.PSK_CONE, 0, h, np.zeros(2))
        inside = ci.project(inst) + 0.1 * np.conj(h) * np.exp(1j * np.pi / 4)
        inst2 = _instance(ci.PSK_CONE, 0, h, inside)
        assert np.array_equal(ci.project(inst2), inst2.center)

    def test_kkt_multipliers_nonnegative(self, rng):
        for _ in range(20):
            h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            inst = _instance(ci.PSK_CONE, 0, h, 3 * rng.standard_normal(2))
            sol = ci.solve_psk_kkt(inst)
            assert all(m >= -1e-12 for m in sol.multipliers)
            inst_c = _instance(ci.CORNER_C, 3, h, 3 * rng.standard_normal(2))
            assert all(m >= -1e-12 for m in ci.solve_qam_C(inst_c).multipliers)

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(DomainError):
            ci.CIInstance(np.zeros(2), 1.0, 1.0, ci.CIRegion(ci.PSK_CONE, 0, 0.5), np.zeros(2))
        with pytest.raises(DomainError):
            ci.CIInstance(np.ones(2), 0.0, 1.0, ci.CIRegion(ci.PSK_CONE, 0, 0.5), np.zeros(2))
        with pytest.raises(DomainError):
            ci.solve_psk_kkt(_instance(ci.EDGE_B, 1, np.ones(2), np.zeros(2)))


class TestBatch:
    @pytest.mark.parametrize("kind,order", [("psk", 4), ("psk", 8), ("qam", 16)])
    def test_batch_matches_per_symbol(self, kind, order, rng):
        sc = desk_scenario(5, constellation=Constellation(kind, order), n_s=12, n_cp=2, num_symbols=12)
        batch = ci.CIBatch.from_scenario(sc)
        centers = rng.standard_normal((12, sc.n_dim)) + 1j * rng.standard_normal((12, sc.n_dim))
        got = batch.project(centers)
        for l in range(12):
            ref = ci.project(ci.CIInstance(sc.channels[l], sc.symbols[l], sc.ci_scale,
                                           batch.regions[l], centers[l]))
            assert np.allclose(got[l], ref, atol=1e-12)

    def test_tightened_projection_has_margin(self, rng):
        sc = desk_scenario(2, n_s=6, n_cp=1, num_symbols=6)
        batch = ci.CIBatch.from_scenario(sc, tighten=0.05)
        centers = rng.standard_normal((6, sc.n_dim)) + 1j * rng.standard_normal((6, sc.n_dim))
        q = batch.project(centers)
        for l in range(6):
            assert ci.CIBatch.from_scenario(sc).margins(q[l])[l] > 0

    def test_equality_rows_pin_qam_coordinates(self):
        sc = desk_scenario(1, constellation=Constellation("qam", 16), n_s=8, n_cp=1, num_symbols=8)
        batch = ci.CIBatch.from_scenario(sc)
        A, b = batch.equality_rows()
        n_eq = sum({ci.EXACT_A: 2, ci.EDGE_B: 1, ci.EDGE_D: 1}.get(r.tag, 0) for r in batch.regions)
        assert A.shape == (n_eq, 2 * sc.n_dim)
        x = np.linalg.lstsq(A, b, rcond=None)[0]
        s_eq = x[:sc.n_dim] + 1j * x[sc.n_dim:]
        w = sc.channels @ s_eq
        target = sc.ci_scale * sc.symbols
        for l, r in enumerate(batch.regions):
            if r.tag in (ci.EXACT_A, ci.EDGE_B):
                assert w[l].real == pytest.approx(target[l].real, abs=1e-10)
            if r.tag in (ci.EXACT_A, ci.EDGE_D):
                assert w[l].imag == pytest.approx(target[l].imag, abs=1e-10)

    def test_margins_sign(self, rng):
        sc = desk_scenario(0, n_s=4, n_cp=1, num_symbols=4)
        batch = ci.CIBatch.from_scenario(sc)
        s = np.linalg.lstsq(sc.channels, 2 * sc.ci_scale * sc.symbols, rcond=None)[0]
        assert np.all(batch.margins(s) > 0)
        assert np.all(batch.margins(-s) < 0)
