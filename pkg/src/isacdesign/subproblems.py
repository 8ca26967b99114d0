"""Auxiliary-variable updates of the penalty splitting and shared kernels.

The b- and p-updates are projections onto a single convex quadratic
constraint ``x^H Lambda x - Re(beta^H x) <= 0`` expressed in an eigenbasis,
so both reduce to one scalar root search over the multiplier.  The
q-updates delegate to :mod:`isacdesign.ci`; the power auxiliary ``z`` is an
element-wise projection onto a halfspace intersected with a disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ci
from .errors import DivergenceError, DomainError, PreconditionError, SurrogateInfeasibleError

ROOT_TOL = 1e-10
BRACKET_CAP = 1e12


@dataclass(frozen=True, eq=False)
class EigCache:
    """``M = Q diag(a) Q^H`` with ascending, clipped-nonnegative ``a``."""

    Q: np.ndarray
    a: np.ndarray
    source: str = ""

    def to_basis(self, x):
        return self.Q.conj().T @ x

    def from_basis(self, x_hat):
        return self.Q @ x_hat


def hermitian_eig(M, source: str = "", tol: float = 1e-10) -> EigCache:
    M = np.asarray(M)
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    if np.abs(M - M.conj().T).max(initial=0.0) > tol * scale:
        raise DomainError("matrix is not Hermitian")
    a, Q = np.linalg.eigh(0.5 * (M + M.conj().T))
    return EigCache(Q, np.clip(a, 0.0, None), source)


def solve_monotone_root(f, lam_max_bracket: float = BRACKET_CAP, tol: float = ROOT_TOL,
                        fprime=None, lam0: float = 1.0) -> float:
    """Root of a continuous non-increasing ``f`` on ``[0, inf)`` with ``f(0) > 0``.

    The bracket grows geometrically until ``f`` changes sign and is then
    shrunk by bisection.  When ``fprime`` is given, Newton steps from the
    latest iterate replace bisection whenever they land inside the bracket.
    Returns ``lam`` with ``|f(lam)| <= tol``.
    """
    f0 = f(0.0)
    if not f0 > 0:
        raise PreconditionError("solve_monotone_root requires f(0) > 0")
    lo, hi = 0.0, lam0
    f_hi = f(hi)
    while f_hi > tol:
        lo, hi = hi, 2.0 * hi
        if hi > lam_max_bracket:
            raise DivergenceError(f"no sign change below lambda = {lam_max_bracket:g}")
        f_hi = f(hi)
    x, fx = hi, f_hi
    for _ in range(500):
        if abs(fx) <= tol:
            return x
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return hi
        cand = 0.5 * (lo + hi)
        if fprime is not None:
            d = fprime(x)
            if d < 0 and lo < x - fx / d < hi:
                cand = x - fx / d
        fc = f(cand)
        if fc > 0:
            lo = cand
        else:
            hi = cand
        x, fx = cand, fc
    return x


def quadratic_constraint(a, beta, x) -> float:
    """``sum a |x|^2 - Re(beta^H x)`` in the eigenbasis."""
    return float(np.sum(a * np.abs(x) ** 2) - np.real(np.vdot(beta, x)))


def kkt_point(a, center, beta, lam):
    """Stationary point ``(center + lam beta / 2) / (1 + lam a)`` for multiplier(s) ``lam``."""
    lam = np.asarray(lam, dtype=float)[..., None]
    return (np.asarray(center) + 0.5 * lam * np.asarray(beta)) / (1.0 + lam * np.asarray(a))


def multiplier_curve(a, center, beta, lam) -> np.ndarray:
    """Constraint value along the KKT curve, ``f(lam)``; non-increasing in ``lam``."""
    x = kkt_point(a, center, beta, lam)
    return np.sum(a * np.abs(x) ** 2, axis=-1) - np.real(np.sum(np.conj(beta) * x, axis=-1))


def project_eig_constraint(a, center, beta, rtol: float = 1e-12):
    """Nearest point to ``center`` with ``sum a|x|^2 - Re(beta^H x) <= 0``.

    Returns ``(x, lam)`` where ``lam`` is the optimal multiplier.
    """
    a = np.asarray(a, dtype=float)
    center = np.asarray(center, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    if quadratic_constraint(a, beta, center) <= 0:
        return center.copy(), 0.0

    def x_of(lam):
        return kkt_point(a, center, beta, lam)

    def f(lam):
        return quadratic_constraint(a, beta, x_of(lam))

    def fprime(lam):
        x = x_of(lam)
        return float(-2.0 * np.sum(np.abs(0.5 * beta - a * x) ** 2 / (1.0 + lam * a)))

    scale = np.sum(a * np.abs(center) ** 2) + abs(np.vdot(beta, center)) + 1e-300
    lam = solve_monotone_root(f, tol=rtol * scale, fprime=fprime)
    return x_of(lam), lam


@dataclass
class AdpmState:
    """Iterates of the penalty splitting for one surrogate problem.

    ``b`` copies ``[s; t]``, ``p`` and every row of ``q`` copy ``s``, and
    ``z`` is the copy carrying the per-sample power constraints.
    """

    s: np.ndarray
    t: float
    b: np.ndarray
    p: np.ndarray
    q: np.ndarray
    z: np.ndarray
    mu_b: np.ndarray
    mu_p: np.ndarray
    mu_q: np.ndarray
    mu_z: np.ndarray
    rho_1: float = 1.0
    rho_2: float = 1.0
    rho_3: np.ndarray = field(default_factory=lambda: np.ones(0))
    rho_4: float = 1.0
    k: int = 0
    residuals: dict = field(default_factory=dict)

    @classmethod
    def start(cls, s, t, num_symbols: int, rho0: float = 1.0) -> "AdpmState":
        s = np.asarray(s, dtype=complex).copy()
        N = s.size
        x = np.append(s, t)
        return cls(
            s=s, t=float(t), b=x.copy(), p=s.copy(), q=np.tile(s, (num_symbols, 1)), z=s.copy(),
            mu_b=np.zeros(N + 1, complex), mu_p=np.zeros(N, complex),
            mu_q=np.zeros((num_symbols, N), complex), mu_z=np.zeros(N, complex),
            rho_1=rho0, rho_2=rho0, rho_3=np.full(num_symbols, rho0), rho_4=rho0,
        )

    @property
    def st(self) -> np.ndarray:
        return np.append(self.s, self.t)


@dataclass(frozen=True, eq=False)
class SurrogateCoefficients:
    """Linear terms of the surrogate constraints at one SCA point.

    ``beta1`` and ``beta2`` are expressed in the eigenbases of the b- and
    p-constraint matrices.  ``w``, ``tau`` and ``u`` describe the
    per-sample power sets ``Re(conj(w) s) >= tau`` and ``|s|^2 <= u``.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    u: np.ndarray


def update_b(state: AdpmState, eig1: EigCache, beta1) -> np.ndarray:
    """Projection of ``[s; t] - mu_b / rho_1`` onto the IMSR surrogate."""
    center = state.st - state.mu_b / state.rho_1
    b_hat, lam = project_eig_constraint(eig1.a, eig1.to_basis(center), beta1)
    # a feasible center is its own projection; skip the basis round trip
    return center if lam == 0.0 else eig1.from_basis(b_hat)


def update_p(state: AdpmState, eig2: EigCache, beta2) -> np.ndarray:
    """Projection of ``s - mu_p / rho_2`` onto the zero-lag peak constraint."""
    center = state.s - state.mu_p / state.rho_2
    p_hat, lam = project_eig_constraint(eig2.a, eig2.to_basis(center), beta2)
    return center if lam == 0.0 else eig2.from_basis(p_hat)


def update_q(state: AdpmState, l: int, h, s_d, ci_scale, region) -> np.ndarray:
    center = state.s - state.mu_q[l] / state.rho_3[l]
    return ci.project(ci.CIInstance(h, s_d, ci_scale, region, center))


def update_q_all(state: AdpmState, batch: "ci.CIBatch") -> np.ndarray:
    """All L q-updates at once; row ``l`` equals :func:`update_q` for symbol ``l``."""
    centers = state.s[None, :] - state.mu_q / state.rho_3[:, None]
    return batch.project(centers)


def project_power(center, w, tau, u) -> np.ndarray:
    """Element-wise projection onto ``{x : Re(conj(w) x) >= tau, |x|^2 <= u}``.

    Each scalar is solved by enumerating the four KKT cases: no active
    constraint, halfspace only, disk only, both.
    """
    c = np.asarray(center, dtype=complex)
    w = np.asarray(w, dtype=complex)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), c.shape)
    u = np.broadcast_to(np.asarray(u, dtype=float), c.shape)
    ww = np.abs(w) ** 2
    if np.any(ww == 0) and np.any(tau[ww == 0] > 0):
        raise SurrogateInfeasibleError("degenerate halfspace excludes every point")
    if np.any(u * ww < tau**2 * (1 - 1e-14)):
        raise SurrogateInfeasibleError("linearized power floor lies outside the magnitude cap")
    ww_safe = np.where(ww == 0, 1.0, ww)

    def in_half(x):
        return np.real(np.conj(w) * x) >= tau - 1e-14 * np.abs(tau)

    def in_disk(x):
        return np.abs(x) ** 2 <= u * (1 + 1e-14)

    out = c.copy()
    done = in_half(c) & in_disk(c)
    x_half = c + np.maximum(tau - np.real(np.conj(w) * c), 0.0) * w / ww_safe
    sel = ~done & in_disk(x_half)
    out[sel] = x_half[sel]
    done |= sel
    mag = np.abs(c)
    x_disk = np.where(mag > 0, c * np.sqrt(u) / np.where(mag > 0, mag, 1.0), 0.0)
    sel = ~done & (np.abs(c) ** 2 > u) & in_half(x_disk)
    out[sel] = x_disk[sel]
    done |= sel
    if np.any(~done):
        wn = np.sqrt(ww_safe)
        foot = tau * w / ww_safe
        along = np.sqrt(np.maximum(u - tau**2 / ww_safe, 0.0))
        cand1 = foot + 1j * along * w / wn
        cand2 = foot - 1j * along * w / wn
        pick = np.where(np.abs(cand1 - c) <= np.abs(cand2 - c), cand1, cand2)
        out[~done] = pick[~done]
    return out


def update_z(state: AdpmState, coeffs: SurrogateCoefficients) -> np.ndarray:
    return project_power(state.s - state.mu_z / state.rho_4, coeffs.w, coeffs.tau, coeffs.u)


def update_s_consensus(state: AdpmState, side_eig: EigCache, lambda_g: float,
                       s_prox, lambda_s: float):
    """Primal step: exact minimizer of the augmented Lagrangian in ``(s, t)``.

    Minimizes ``-t + lambda_g s^H G s + lambda_s |s - s_prox|^2`` plus the
    quadratic consensus penalties of every auxiliary copy.
    """
    N = state.s.size
    rho_q = state.rho_3[:, None]
    targets = (state.rho_1 * (state.b[:N] + state.mu_b[:N] / state.rho_1)
               + state.rho_2 * (state.p + state.mu_p / state.rho_2)
               + np.sum(rho_q * (state.q + state.mu_q / rho_q), axis=0)
               + state.rho_4 * (state.z + state.mu_z / state.rho_4))
    total = state.rho_1 + state.rho_2 + np.sum(state.rho_3) + state.rho_4
    rhs = lambda_s * np.asarray(s_prox) + 0.5 * targets
    diag = lambda_g * side_eig.a + lambda_s + 0.5 * total
    s = side_eig.from_basis(side_eig.to_basis(rhs) / diag)
    t = float(np.real(state.b[N] + state.mu_b[N] / state.rho_1) + 1.0 / state.rho_1)
    return s, t


def consensus_residuals(state: AdpmState) -> dict:
    st = state.st
    return {
        "b": float(np.max(np.abs(state.b - st))),
        "p": float(np.max(np.abs(state.p - state.s))),
        "q": float(np.max(np.abs(state.q - state.s[None, :]))) if state.q.size else 0.0,
        "z": float(np.max(np.abs(state.z - state.s))),
    }


def update_multipliers_and_penalties(state: AdpmState, growth: float = 1.1,
                                     rho_max: float = 1e6) -> AdpmState:
    """Dual ascent on every consensus constraint, then penalty growth."""
    if growth < 1:
        raise DomainError("penalty growth must be >= 1")
    st = state.st
    new = replace(
        state,
        mu_b=state.mu_b + state.rho_1 * (state.b - st),
        mu_p=state.mu_p + state.rho_2 * (state.p - state.s),
        mu_q=state.mu_q + state.rho_3[:, None] * (state.q - state.s[None, :]),
        mu_z=state.mu_z + state.rho_4 * (state.z - state.s),
        rho_1=min(growth * state.rho_1, rho_max),
        rho_2=min(growth * state.rho_2, rho_max),
        rho_3=np.minimum(growth * state.rho_3, rho_max),
        rho_4=min(growth * state.rho_4, rho_max),
        k=state.k + 1,
    )
    new.residuals = consensus_residuals(new)
    return new
