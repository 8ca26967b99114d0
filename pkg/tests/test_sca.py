import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacdesign import adpm
from isacdesign.ao import build_G_side, initial_waveform
from isacdesign.config import SolverConfig
from isacdesign.errors import DomainError, SolverConsistencyError
from isacdesign.model import build_beampattern_matrices, desk_scenario
from isacdesign.sca import (
    FractionalSurrogate,
    Workspace,
    check_surrogate_dominance,
    fractional_constraint,
    imsr_ratio,
    linearize_fractional,
    linearize_power,
    max_generalized_eigenvalue,
    objective,
    sca_solve,
)
from isacdesign.subproblems import SurrogateCoefficients, hermitian_eig

FAST = SolverConfig(check_surrogate_samples=100, sca_max_iter=6)


@pytest.fixture(scope="module")
def small_ws():
    return Workspace.build(desk_scenario(3, n_s=8, n_cp=2, num_symbols=4), FAST)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestFractional:
    def test_constraint_sign(self, rng, small_ws):
        beams = small_ws.problem.beams
        s = crandn(rng, small_ws.scenario.n_dim)
        r = imsr_ratio(s, beams.psi_ml, beams.psi_sl)
        assert fractional_constraint(s, 0.9 * r, beams.psi_ml, beams.psi_sl) < 0
        assert fractional_constraint(s, 1.1 * r, beams.psi_ml, beams.psi_sl) > 0
        with pytest.raises(DomainError):
            fractional_constraint(s, 0.0, beams.psi_ml, beams.psi_sl)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), t_scale=st.floats(0.05, 20))
    def test_surrogate_dominates_and_is_tight(self, seed, t_scale):
        rng = np.random.default_rng(seed)
        beams = build_beampattern_matrices(desk_scenario(0, n_s=3, n_cp=1, num_symbols=2))
        n = beams.psi_ml.shape[0]
        s_bar = crandn(rng, n)
        t_bar = imsr_ratio(s_bar, beams.psi_ml, beams.psi_sl)
        frac = linearize_fractional(s_bar, t_bar, beams.psi_ml, beams.psi_sl)
        assert frac.value(s_bar, t_bar) == pytest.approx(
            fractional_constraint(s_bar, t_bar, beams.psi_ml, beams.psi_sl), abs=1e-9)
        s, t = crandn(rng, n), t_scale * t_bar
        orig = fractional_constraint(s, t, beams.psi_ml, beams.psi_sl)
        assert frac.value(s, t) >= orig - 1e-9 * max(1, abs(orig))
        assert frac.value(s, frac.max_t(s)) == pytest.approx(0, abs=1e-9)

    def test_dominance_check_flags_bad_surrogate(self, rng):
        beams = build_beampattern_matrices(desk_scenario(0, n_s=3, n_cp=1, num_symbols=2))
        s_bar = crandn(rng, beams.psi_ml.shape[0])
        good = linearize_fractional(s_bar, 1.0, beams.psi_ml, beams.psi_sl)
        assert check_surrogate_dominance(good, beams.psi_ml, beams.psi_sl, 200, rng) <= 1e-10
        bad = FractionalSurrogate(good.psi_sl, 3 * good.lin, good.kappa, s_bar, 1.0)
        with pytest.raises(SolverConsistencyError):
            check_surrogate_dominance(bad, beams.psi_ml, beams.psi_sl, 200, rng)

    def test_linearization_domain(self, small_ws):
        beams = small_ws.problem.beams
        n = small_ws.scenario.n_dim
        with pytest.raises(DomainError):
            linearize_fractional(np.ones(n), 0.0, beams.psi_ml, beams.psi_sl)
        with pytest.raises(DomainError):
            linearize_fractional(np.zeros(n), 1.0, beams.psi_ml, beams.psi_sl)


class TestPowerLinearization:
    def test_halfspace_implies_floor(self, rng):
        s_bar = 0.5 * np.exp(1j * rng.uniform(0, 6.3, 30))
        lin = linearize_power(s_bar, 0.2, 1.0, 4)
        lo = 0.8 / 4
        x = crandn(rng, 10_000, 30)
        half = np.real(np.conj(lin.w) * x) >= lin.tau
        assert half.any()
        assert np.all(np.abs(x[half]) ** 2 >= lo - 1e-12)

    def test_tight_at_floor_point(self):
        s_bar = np.sqrt(0.2) * np.ones(3, complex)
        lin = linearize_power(s_bar, 0.2, 1.0, 4)
        floor, cap = lin.slack(s_bar)
        assert np.allclose(floor, 0) and np.all(cap > 0)

    def test_backoff_shrinks_band(self):
        s_bar = 0.5 * np.ones(2, complex)
        a, b = linearize_power(s_bar, 0.2, 1.0, 4), linearize_power(s_bar, 0.2, 1.0, 4, backoff=0.1)
        assert np.all(b.tau > a.tau) and np.all(b.u < a.u)

    def test_zero_sample_recentered(self):
        lin = linearize_power(np.zeros(2, complex), 0.2, 1.0, 4, rng=np.random.default_rng(0))
        assert np.all(lin.recentered)
        assert np.allclose(np.abs(lin.w) ** 2 / 4, 0.2)


def test_generalized_eigenvalue_bounds_ratio(rng, small_ws):
    beams = small_ws.problem.beams
    lam = max_generalized_eigenvalue(beams.psi_ml, beams.psi_sl)
    assert lam == pytest.approx(small_ws.lam_max)
    for _ in range(50):
        s = crandn(rng, beams.psi_ml.shape[0])
        assert imsr_ratio(s, beams.psi_ml, beams.psi_sl) <= lam * (1 + 1e-12)


def test_workspace_feasibility_keys(small_ws, rng):
    s = initial_waveform(small_ws, rng)
    g = small_ws.scenario.eta * (small_ws.problem.shifts.zero_lag @ s)
    feas = small_ws.feasibility(s, small_ws.ratio(s), g)
    assert set(feas) == {"fractional", "power_floor", "power_cap", "ci", "peak"}
    assert max(feas.values()) <= 1e-9


def test_adpm_reaches_consensus(small_ws, rng):
    ws = small_ws
    s = initial_waveform(ws, rng)
    t = ws.ratio(s)
    g = ws.scenario.eta * (ws.problem.shifts.zero_lag @ s)
    G = build_G_side(g, ws.problem.shifts)
    beams = ws.problem.beams
    frac = linearize_fractional(s, t, beams.psi_ml, beams.psi_sl)
    pw = linearize_power(s, ws.scenario.epsilon, ws.scenario.p0, ws.scenario.n_t, backoff=1e-3)
    beta2 = ws.eig2.to_basis(ws.problem.shifts.zero_lag.conj().T @ g)
    coeffs = SurrogateCoefficients(ws.eig1.to_basis(frac.beta), beta2, pw.w, pw.tau, pw.u)
    prob = adpm.SurrogateProblem(ws.eig1, ws.eig2, hermitian_eig(G), coeffs, ws.ci_tight,
                                 ws.scenario.lambda_g, ws.scenario.lambda_s, s)
    res = adpm.run_adpm(prob, s, t, max_iter=500, tol=1e-5, rho0=0.01)
    assert res.converged
    assert adpm.max_residual(res.state.residuals) <= 1e-5
    assert len(res.residual_trace) == res.iterations


def test_sca_iterates_feasible_and_monotone(small_ws, rng):
    ws = small_ws
    s = initial_waveform(ws, rng)
    g = ws.scenario.eta * (ws.problem.shifts.zero_lag @ s)
    G = build_G_side(g, ws.problem.shifts)
    out = sca_solve(ws, g, hermitian_eig(G), G, s)
    assert out.stop_reason in {"converged", "no-descent", "max-iter"}
    assert np.all(np.diff(out.f_trace) <= 1e-8)
    assert len(out.iterates) == len(out.f_trace)
    for (x, t), feas in zip(out.iterates, out.feas_trace):
        assert max(feas.values()) <= 1e-6
        assert t == pytest.approx(ws.ratio(x))
    assert out.f_trace[-1] == pytest.approx(objective(out.s, out.t, G, ws.scenario.lambda_g))
    assert out.f_trace[-1] < out.f_trace[0]
