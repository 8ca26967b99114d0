"""Successive convex approximation of the waveform step.

With the receive filter fixed, the waveform problem maximizes an epigraph
variable ``t`` of the IMSR ratio minus a range-sidelobe penalty, under a
nonconvex fractional constraint and nonconvex per-sample power floors.
Both are replaced by convex upper bounds that are tight at the current
point, the surrogate is solved by ADPM, and the result is pulled back onto
the exactly feasible set so that every iterate stays feasible and the
objective never increases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import adpm as adpm_mod
from .ci import CIBatch
from .config import SolverConfig
from .errors import DomainError, SolverConsistencyError, SurrogateInfeasibleError
from .model import ProblemData, Scenario, build_problem
from .subproblems import EigCache, SurrogateCoefficients, hermitian_eig

log = logging.getLogger(__name__)


def imsr_ratio(s, psi_ml, psi_sl) -> float:
    """``s^H psi_ml s / s^H psi_sl s`` (linear)."""
    num = np.real(np.vdot(s, psi_ml @ s))
    den = np.real(np.vdot(s, psi_sl @ s))
    if den <= 0:
        raise DomainError("waveform has no sidelobe energy (zero waveform?)")
    return float(num / den)


def fractional_constraint(s, t, psi_ml, psi_sl) -> float:
    """Original constraint ``s^H psi_sl s - s^H psi_ml s / t`` (feasible when <= 0)."""
    if t <= 0:
        raise DomainError("epigraph variable must be positive")
    return float(np.real(np.vdot(s, psi_sl @ s)) - np.real(np.vdot(s, psi_ml @ s)) / t)


@dataclass(frozen=True, eq=False)
class FractionalSurrogate:
    """``s^H psi_sl s - Re(lin^H s) + kappa t``, tight at ``(s_bar, t_bar)``."""

    psi_sl: np.ndarray
    lin: np.ndarray
    kappa: float
    s_bar: np.ndarray
    t_bar: float

    def value(self, s, t) -> float:
        return float(np.real(np.vdot(s, self.psi_sl @ s)) - np.real(np.vdot(self.lin, s)) + self.kappa * t)

    def max_t(self, s) -> float:
        """Largest ``t`` for which ``(s, t)`` satisfies the surrogate."""
        return float((np.real(np.vdot(self.lin, s)) - np.real(np.vdot(s, self.psi_sl @ s))) / self.kappa)

    @property
    def beta(self) -> np.ndarray:
        """Linear coefficient on the stacked variable ``[s; t]``."""
        return np.append(self.lin, -self.kappa)


def linearize_fractional(s_bar, t_bar, psi_ml, psi_sl) -> FractionalSurrogate:
    """First-order majorizer of ``-s^H psi_ml s / t`` around ``(s_bar, t_bar)``.

    ``s^H A s / t`` is jointly convex for ``t > 0``, so its tangent plane
    lies below it and the surrogate bounds the original constraint above.
    """
    if not t_bar > 0:
        raise DomainError("linearization point needs t_bar > 0")
    s_bar = np.asarray(s_bar, dtype=complex)
    if not np.any(s_bar):
        raise DomainError("linearization point needs s_bar != 0")
    ml_s = psi_ml @ s_bar
    kappa = float(np.real(np.vdot(s_bar, ml_s))) / t_bar**2
    return FractionalSurrogate(psi_sl, 2.0 * ml_s / t_bar, kappa, s_bar, float(t_bar))


@dataclass(frozen=True, eq=False)
class PowerHalfspaces:
    """Per-sample sets ``Re(conj(w) s) >= tau`` and ``|s|^2 <= u``.

    ``recentered`` flags samples whose linearization point was zero and
    had to be moved onto the power floor.
    """

    w: np.ndarray
    tau: np.ndarray
    u: np.ndarray
    recentered: np.ndarray

    def slack(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s)
        return np.real(np.conj(self.w) * s) - self.tau, self.u - np.abs(s) ** 2


def linearize_power(s_bar, epsilon: float, p0: float, n_t: int, *, backoff: float = 0.0,
                    rng=None) -> PowerHalfspaces:
    """Tangent halfspaces of the power floor ``|s_m|^2 >= (1 - eps) P0 / N_t``.

    ``|s|^2 >= 2 Re(conj(s_bar) s) - |s_bar|^2`` for every ``s``, so the
    halfspace implies the floor.  ``backoff`` moves both bounds inward by
    that fraction of the power band.
    """
    lo = (1 - epsilon) * p0 / n_t
    hi = (1 + epsilon) * p0 / n_t
    band = backoff * (hi - lo)
    s_bar = np.array(s_bar, dtype=complex)
    degenerate = np.abs(s_bar) ** 2 < 1e-12 * lo
    if np.any(degenerate):
        rng = np.random.default_rng(0) if rng is None else rng
        phases = rng.uniform(0, 2 * np.pi, int(degenerate.sum()))
        s_bar[degenerate] = np.sqrt(lo) * np.exp(1j * phases)
    w = 2.0 * s_bar
    tau = np.abs(s_bar) ** 2 + lo + band
    u = np.full(s_bar.shape, hi - band)
    return PowerHalfspaces(w, tau, u, degenerate)


def objective(s, t, side_matrix, lambda_g: float) -> float:
    """``f(s, t) = -t + lambda_g s^H G_side s``."""
    return float(-t + lambda_g * np.real(np.vdot(s, side_matrix @ s)))


def max_generalized_eigenvalue(psi_ml, psi_sl) -> float:
    """Largest ``lambda`` with ``psi_ml x = lambda psi_sl x``: the IMSR ceiling."""
    return float(scipy.linalg.eigh(psi_ml, psi_sl, eigvals_only=True)[-1])


@dataclass(frozen=True, eq=False)
class Workspace:
    """Per-scenario data shared by every SCA / AO call.

    Eigen-decompositions of the fractional and peak constraint matrices do
    not depend on the iterate and are computed once here.
    """

    problem: ProblemData
    cfg: SolverConfig
    eig1: EigCache
    eig2: EigCache
    ci: CIBatch
    ci_tight: CIBatch
    eta_eff: float
    lam_max: float

    @classmethod
    def build(cls, scenario: Scenario, cfg: SolverConfig | None = None) -> "Workspace":
        cfg = SolverConfig() if cfg is None else cfg
        prob = build_problem(scenario)
        N = scenario.n_dim
        b_mat = np.zeros((N + 1, N + 1), dtype=complex)
        b_mat[:N, :N] = prob.beams.psi_sl
        eta_eff = scenario.eta * (1.0 + cfg.peak_backoff)
        r_op = prob.shifts.zero_lag
        ci = CIBatch.from_scenario(scenario)
        return cls(
            problem=prob, cfg=cfg,
            eig1=hermitian_eig(b_mat, "blockdiag(psi_sl, 0)"),
            eig2=hermitian_eig(eta_eff * (r_op.conj().T @ r_op), "eta G0^H G0"),
            ci=ci, ci_tight=ci.tightened(cfg.ci_backoff), eta_eff=eta_eff,
            lam_max=max_generalized_eigenvalue(prob.beams.psi_ml, prob.beams.psi_sl),
        )

    @property
    def scenario(self) -> Scenario:
        return self.problem.scenario

    def ratio(self, s) -> float:
        return imsr_ratio(s, self.problem.beams.psi_ml, self.problem.beams.psi_sl)

    def peak_constraint(self, s, g, eta: float | None = None) -> float:
        """``eta |G0 s|^2 - Re(g^H G0 s)``; the zero-lag peak is preserved when <= 0."""
        eta = self.scenario.eta if eta is None else eta
        r = self.problem.shifts.zero_lag @ s
        return float(eta * np.real(np.vdot(r, r)) - np.real(np.vdot(g, r)))

    def feasibility(self, s, t, g) -> dict:
        """Signed violations of every original constraint (<= 0 means satisfied)."""
        sc = self.scenario
        lo, hi = sc.power_bounds
        pw = np.abs(s) ** 2
        return {
            "fractional": fractional_constraint(s, t, self.problem.beams.psi_ml, self.problem.beams.psi_sl),
            "power_floor": float(np.max(lo - pw)),
            "power_cap": float(np.max(pw - hi)),
            "ci": float(np.max(-self.ci.margins(s))),
            "peak": self.peak_constraint(s, g),
        }


@dataclass
class ScaState:
    """Iterates and diagnostics of one SCA run."""

    j: int
    s: np.ndarray
    t: float
    t_bar: float
    f_trace: list = field(default_factory=list)
    feas_trace: list = field(default_factory=list)
    adpm_iters: list = field(default_factory=list)
    adpm_residuals: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    stop_reason: str = ""


def _correct_equalities(s, ci: CIBatch):
    """Minimum-norm shift of ``s`` onto the pinned QAM coordinates."""
    A, b = ci.equality_rows()
    if A.shape[0] == 0:
        return s
    x = np.concatenate([s.real, s.imag])
    dx = np.linalg.lstsq(A, b - A @ x, rcond=None)[0]
    x = x + dx
    n = s.size
    return x[:n] + 1j * x[n:]


def _hard_feasible(ws: Workspace, s, power: PowerHalfspaces, g, atol: float = 1e-12) -> bool:
    floor, cap = power.slack(s)
    if np.min(floor) < -atol or np.min(cap) < -atol:
        return False
    if np.min(ws.ci.margins(s)) < -atol:
        return False
    return ws.peak_constraint(s, g) <= atol


def check_surrogate_dominance(frac: FractionalSurrogate, psi_ml, psi_sl, samples: int, rng,
                              tol: float = 1e-10) -> float:
    """Worst ``original - surrogate`` over random ``(s, t)``; must stay <= tol."""
    N = frac.s_bar.size
    scale = np.linalg.norm(frac.s_bar) / np.sqrt(N)
    S = scale * (rng.standard_normal((samples, N)) + 1j * rng.standard_normal((samples, N)))
    T = frac.t_bar * rng.uniform(0.05, 5.0, samples)
    sl = np.real(np.einsum("ij,jk,ik->i", S.conj(), psi_sl, S))
    ml = np.real(np.einsum("ij,jk,ik->i", S.conj(), psi_ml, S))
    orig = sl - ml / T
    surr = sl - np.real(S @ frac.lin.conj()) + frac.kappa * T
    worst = float(np.max((orig - surr) / np.maximum(1.0, np.abs(orig))))
    if worst > tol:
        raise SolverConsistencyError(f"surrogate fails to dominate the fractional constraint ({worst:.3e})")
    return worst


def sca_solve(ws: Workspace, g, side_eig: EigCache, side_matrix, s0, t0=None, *,
              trace=None) -> ScaState:
    """Minimize ``-t + lambda_g s^H G_side s`` over feasible ``(s, t)`` by SCA.

    Parameters
    ----------
    ws : Workspace
    g : ndarray
        Receive filter defining the zero-lag peak constraint.
    side_eig, side_matrix : EigCache, ndarray
        Range-sidelobe matrix ``G_side`` for ``g`` and its eigen-decomposition.
    s0, t0 : ndarray, float
        Feasible starting point.  ``t0`` defaults to the IMSR ratio of ``s0``.
    trace : callable, optional
        Receives one dict per SCA iteration (diagnostics log).

    Returns
    -------
    ScaState
        Every recorded iterate satisfies the original constraints to
        ``cfg.feas_tol`` and ``f_trace`` is non-increasing.
    """
    cfg, sc = ws.cfg, ws.scenario
    beams = ws.problem.beams
    lam_g, lam_s = sc.lambda_g, sc.lambda_s
    g = np.asarray(g, dtype=complex)
    s = np.asarray(s0, dtype=complex).copy()
    t = ws.ratio(s) if t0 is None else float(t0)
    rng = np.random.default_rng(cfg.seed)
    beta2 = ws.eig2.to_basis(ws.problem.shifts.zero_lag.conj().T @ g)

    def surrogate_value(x, frac):
        d = x - s
        return (-frac.max_t(x) + lam_g * np.real(np.vdot(x, side_matrix @ x))
                + lam_s * np.real(np.vdot(d, d)))

    def record(state, s_new, t_new):
        feas = ws.feasibility(s_new, t_new, g)
        if max(feas.values()) > cfg.feas_tol:
            raise SolverConsistencyError(f"SCA iterate {state.j} left the feasible set: {feas}")
        f_new = objective(s_new, t_new, side_matrix, lam_g)
        if state.f_trace:
            if f_new > state.f_trace[-1] + cfg.monotone_slack:
                raise SolverConsistencyError(
                    f"SCA objective increased: {state.f_trace[-1]:.12g} -> {f_new:.12g}")
        if f_new < -ws.lam_max - cfg.monotone_slack:
            raise SolverConsistencyError(f"SCA objective {f_new} below -lambda_max {-ws.lam_max}")
        state.f_trace.append(f_new)
        state.feas_trace.append(feas)
        state.iterates.append((s_new.copy(), float(t_new)))
        return f_new

    state = ScaState(0, s, t, ws.ratio(s))
    record(state, s, t)
    for j in range(1, cfg.sca_max_iter + 1):
        t_bar = ws.ratio(s)
        frac = linearize_fractional(s, t_bar, beams.psi_ml, beams.psi_sl)
        if cfg.check_surrogate_samples:
            check_surrogate_dominance(frac, beams.psi_ml, beams.psi_sl, cfg.check_surrogate_samples, rng)
        power_true = linearize_power(s, sc.epsilon, sc.p0, sc.n_t, rng=rng)
        try:
            power = linearize_power(s, sc.epsilon, sc.p0, sc.n_t, backoff=cfg.power_backoff, rng=rng)
            coeffs = SurrogateCoefficients(ws.eig1.to_basis(frac.beta), beta2, power.w, power.tau, power.u)
        except SurrogateInfeasibleError:
            coeffs = SurrogateCoefficients(ws.eig1.to_basis(frac.beta), beta2,
                                           power_true.w, power_true.tau, power_true.u)
        sprob = adpm_mod.SurrogateProblem(ws.eig1, ws.eig2, side_eig, coeffs, ws.ci_tight,
                                          lam_g, lam_s, s)
        res = adpm_mod.run_adpm(sprob, s, t_bar, max_iter=cfg.adpm_max_iter, tol=cfg.adpm_tol,
                                rho0=cfg.rho0, growth=cfg.rho_growth, rho_max=cfg.rho_max)
        cand = _correct_equalities(res.state.s, ws.ci)

        # pull the candidate back along the segment towards the feasible s
        theta = 1.0
        if not _hard_feasible(ws, cand, power_true, g):
            lo_th, hi_th = 0.0, 1.0
            for _ in range(40):
                mid = 0.5 * (lo_th + hi_th)
                if _hard_feasible(ws, s + mid * (cand - s), power_true, g):
                    lo_th = mid
                else:
                    hi_th = mid
            theta = lo_th
        s_new = s + theta * (cand - s)
        F_old = surrogate_value(s, frac)
        F_new = surrogate_value(s_new, frac)
        state.adpm_iters.append(res.iterations)
        state.adpm_residuals.append(dict(res.state.residuals))
        if theta == 0.0 or not F_new < F_old:
            state.stop_reason = "no-descent"
            if trace is not None:
                trace({"j": j, "accepted": False, "theta": theta, "adpm_iters": res.iterations,
                       "adpm_residual": adpm_mod.max_residual(res.state.residuals)})
            break
        t_new = ws.ratio(s_new)
        f_prev = state.f_trace[-1]
        f_new = record(state, s_new, t_new)
        state.step_sizes.append(theta)
        state.step_norms.append(float(np.linalg.norm(s_new - s)))
        state.j = j
        s, t = s_new, t_new
        state.s, state.t, state.t_bar = s, t, t_bar
        if trace is not None:
            trace({"j": j, "accepted": True, "theta": float(f"{theta:.3g}"), "f": f_new, "t": t,
                   "adpm_iters": res.iterations,
                   "adpm_residual": adpm_mod.max_residual(res.state.residuals),
                   "feasibility": state.feas_trace[-1]})
        if abs(f_prev - f_new) <= cfg.sca_tol:
            state.stop_reason = "converged"
            break
    else:
        state.stop_reason = "max-iter"
    state.s, state.t = s, t
    return state
