import numpy as np
import pytest

from isacdesign.ao import (
    BlockContext,
    ao_solve,
    block_context,
    block_scenarios,
    build_D,
    build_G_side,
    g_objective,
    initial_waveform,
    interleaved_schedule,
    leakage_energy,
    normalized_filter,
    project_annulus,
    update_filter,
)
from isacdesign.config import SolverConfig
from isacdesign.errors import (
    ConfigurationError,
    DegenerateWaveformError,
    InitializationError,
)
from isacdesign.evaluation import range_profile
from isacdesign.model import desk_scenario
from isacdesign.sca import Workspace

FAST = SolverConfig(ao_max_iter=4, ao_min_iter=2, sca_max_iter=4, check_surrogate_samples=50)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def ws():
    return Workspace.build(desk_scenario(3, n_s=8, n_cp=2, num_symbols=4), FAST)


@pytest.fixture
def ctx(ws, rng):
    n = ws.scenario.n_dim
    return BlockContext(0.5 * crandn(rng, n), 0.5 * crandn(rng, n), 2)


class TestFilter:
    def test_distortionless_and_optimal(self, ws, ctx, rng):
        ops = ws.problem.shifts
        s = crandn(rng, ws.scenario.n_dim)
        g = update_filter(s, ctx, ops)
        r = ops.zero_lag @ s
        assert np.vdot(g, r) == pytest.approx(1.0, abs=1e-10)
        D = build_D(s, ctx, ops)
        best = np.vdot(g, D @ g).real
        # feasible perturbations keep g^H r = 1: directions orthogonal to r
        P = np.eye(r.size) - np.outer(r, r.conj()) / np.vdot(r, r).real
        for _ in range(30):
            d = P @ crandn(rng, r.size)
            g2 = g + 1e-2 * d
            assert np.vdot(g2, D @ g2).real >= best * (1 - 1e-9)

    def test_D_collects_sidelobes_and_leakage(self, ws, ctx, rng):
        ops = ws.problem.shifts
        s, g = crandn(rng, ws.scenario.n_dim), crandn(rng, ws.scenario.block_len)
        prof = range_profile(g, s, ctx.s_pre, ctx.s_post, ops)
        expected = prof.own_sidelobe_energy + np.sum(np.abs(prof.pre) ** 2) + np.sum(np.abs(prof.post) ** 2)
        # the zero-lag entries of pre/post are leakage as well
        assert np.vdot(g, build_D(s, ctx, ops) @ g).real == pytest.approx(expected, rel=1e-12)
        assert leakage_energy(g, ctx, ops) == pytest.approx(expected - prof.own_sidelobe_energy, rel=1e-12)

    def test_G_side_quadratic_form(self, ws, rng):
        ops = ws.problem.shifts
        s, g = crandn(rng, ws.scenario.n_dim), crandn(rng, ws.scenario.block_len)
        G = build_G_side(g, ops)
        assert np.allclose(G, G.conj().T)
        prof = range_profile(g, s, s, s, ops)
        assert np.vdot(s, G @ s).real == pytest.approx(prof.own_sidelobe_energy, rel=1e-12)

    def test_normalized_filter_unit_peak(self, ws, rng):
        ops = ws.problem.shifts
        s, g = crandn(rng, ws.scenario.n_dim), crandn(rng, ws.scenario.block_len)
        gn = normalized_filter(g, s, ops)
        assert np.vdot(gn, ops.zero_lag @ s) == pytest.approx(1.0)

    def test_zero_waveform_rejected(self, ws, ctx):
        with pytest.raises(DegenerateWaveformError):
            update_filter(np.zeros(ws.scenario.n_dim), ctx, ws.problem.shifts)


class TestInitialization:
    def test_annulus_projection(self, rng):
        x = project_annulus(crandn(rng, 100), 0.5, 1.0)
        assert np.all((np.abs(x) ** 2 >= 0.5 - 1e-12) & (np.abs(x) ** 2 <= 1.0 + 1e-12))

    def test_initial_waveform_feasible(self, ws, rng):
        s = initial_waveform(ws, rng)
        lo, hi = ws.scenario.power_bounds
        assert np.all(ws.ci.margins(s) >= 0)
        assert np.all((np.abs(s) ** 2 >= lo - 1e-12) & (np.abs(s) ** 2 <= hi + 1e-12))

    def test_impossible_ci_raises(self, rng):
        ws_hard = Workspace.build(desk_scenario(3, n_s=8, n_cp=2, num_symbols=4, gamma_u=1e6), FAST)
        with pytest.raises(InitializationError):
            initial_waveform(ws_hard, rng, max_cycles=50)


class TestAO:
    def test_monotone_trace_and_feasible_result(self, ws, ctx):
        res = ao_solve(ws, ctx)
        tr = np.asarray(res.g_obj_trace)
        assert res.ao_iterations >= FAST.ao_min_iter
        assert np.all(np.diff(tr) <= 1e-8)
        assert tr[-1] >= -ws.lam_max
        assert max(res.feasibility.values()) <= 1e-6
        assert max(res.identity_errors) <= 1e-9
        assert res.g_obj_trace[-1] == pytest.approx(
            g_objective(res.g, res.s, res.t, ctx, ws.problem.shifts, ws.scenario.lambda_g))

    def test_filter_step_needs_positive_eta(self, ctx):
        ws0 = Workspace.build(desk_scenario(3, n_s=8, n_cp=2, num_symbols=4, eta=0.0), FAST)
        with pytest.raises(ConfigurationError):
            ao_solve(ws0, ctx)

    def test_infeasible_start_rejected(self, ws, ctx):
        with pytest.raises(InitializationError):
            ao_solve(ws, ctx, s0=np.full(ws.scenario.n_dim, 10.0 + 0j))


class TestSchedule:
    def test_block_scenarios(self):
        sc = desk_scenario(3, n_s=8, n_cp=2, num_symbols=4)
        blocks = block_scenarios(sc, 3, seed=0)
        assert blocks[0] is sc
        assert all(np.array_equal(b.channels, sc.channels) for b in blocks)
        again = block_scenarios(sc, 3, seed=0)
        assert np.array_equal(blocks[2].symbols, again[2].symbols)

    def test_block_context_edges(self):
        waves = [np.full(2, k, complex) for k in (1, 2, 3)]
        boundary = (np.zeros(2, complex), np.full(2, 9, complex))
        assert block_context(1, waves, boundary).s_pre is boundary[0]
        assert block_context(3, waves, boundary).s_post is boundary[1]
        mid = block_context(2, waves, boundary)
        assert mid.s_pre is waves[0] and mid.s_post is waves[2]

    def test_threads_do_not_change_results(self):
        sc = desk_scenario(3, n_s=8, n_cp=2, num_symbols=4)
        one = interleaved_schedule(sc, 3, FAST, threads=1)
        two = interleaved_schedule(sc, 3, FAST, threads=2)
        for a, b in zip(one.blocks, two.blocks):
            assert np.array_equal(a.s, b.s) and np.array_equal(a.g, b.g)

    def test_final_contexts_are_final_neighbours(self):
        sc = desk_scenario(3, n_s=8, n_cp=2, num_symbols=4)
        sched = interleaved_schedule(sc, 3, FAST)
        for r in sched.blocks:
            ctx = sched.neighbours(r.index)
            assert np.array_equal(r.ctx.s_pre, ctx.s_pre) and np.array_equal(r.ctx.s_post, ctx.s_post)
            assert max(r.feasibility.values()) <= 1e-6

    def test_rejects_zero_blocks(self):
        with pytest.raises(ConfigurationError):
            interleaved_schedule(desk_scenario(), 0)
