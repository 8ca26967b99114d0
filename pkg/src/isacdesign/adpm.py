"""Penalty-splitting (ADPM) loop for one convex surrogate problem.

Every constraint of the surrogate lives on its own auxiliary copy of the
waveform: ``b`` carries the fractional-IMSR surrogate, ``p`` the zero-lag
peak constraint, ``q_l`` the CI constraint of symbol ``l`` and ``z`` the
per-sample power sets.  The primal ``(s, t)`` step is then an
unconstrained quadratic solved in the eigenbasis of the sidelobe matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ci import CIBatch
from .subproblems import (
    AdpmState,
    EigCache,
    SurrogateCoefficients,
    update_b,
    update_multipliers_and_penalties,
    update_p,
    update_q_all,
    update_s_consensus,
    update_z,
)


@dataclass(frozen=True, eq=False)
class SurrogateProblem:
    """Data of one SCA surrogate, fixed while ADPM runs."""

    eig1: EigCache
    eig2: EigCache
    side_eig: EigCache
    coeffs: SurrogateCoefficients
    ci: CIBatch
    lambda_g: float
    lambda_s: float
    s_prox: np.ndarray


@dataclass
class AdpmResult:
    state: AdpmState
    iterations: int
    converged: bool
    residual_trace: list


def max_residual(res: dict) -> float:
    return max(res.values()) if res else np.inf


def adpm_sweep(state: AdpmState, prob: SurrogateProblem, growth: float, rho_max: float) -> AdpmState:
    """One pass: auxiliaries, primal step, multipliers and penalties."""
    state.b = update_b(state, prob.eig1, prob.coeffs.beta1)
    state.p = update_p(state, prob.eig2, prob.coeffs.beta2)
    state.q = update_q_all(state, prob.ci)
    state.z = update_z(state, prob.coeffs)
    state.s, state.t = update_s_consensus(state, prob.side_eig, prob.lambda_g, prob.s_prox, prob.lambda_s)
    return update_multipliers_and_penalties(state, growth, rho_max)


def run_adpm(prob: SurrogateProblem, s0, t0, *, max_iter: int = 500, tol: float = 1e-5,
             rho0: float = 1.0, growth: float = 1.1, rho_max: float = 1e6) -> AdpmResult:
    """Iterate ADPM sweeps until every consensus residual is below ``tol``."""
    state = AdpmState.start(s0, t0, prob.ci.H.shape[0], rho0)
    trace = []
    converged = False
    for _ in range(max_iter):
        state = adpm_sweep(state, prob, growth, rho_max)
        r = max_residual(state.residuals)
        trace.append(r)
        if r <= tol:
            converged = True
            break
    return AdpmResult(state, state.k, converged, trace)
