"""Brute-force reference solvers and the validation suites built on them.

Nothing in this module calls into the solver kernels it checks: each
oracle has its own eigen-decomposition, membership tests, projections and
random streams.  The oracles are slow by design.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

ENV_TOL = "ISACDESIGN_VALIDATE_TOL"


class OracleError(RuntimeError):
    """An oracle could not produce a reference answer (no bracket, divergence)."""


# -- quadratic constraint: dense lambda scan --------------------------------

def grid_lambda_oracle(M, beta, center, lam_hi: float | None = None, resolution: int = 10**6):
    """Nearest point to ``center`` with ``x^H M x - Re(beta^H x) <= 0``.

    Scans the multiplier on a geometric grid of ``resolution`` points,
    brackets the first sign change of the constraint along the KKT curve
    and refines with Brent's method.  Returns ``(lam, x)``.
    """
    M = np.asarray(M, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    center = np.asarray(center, dtype=complex)
    if M.shape[0] > 16:
        raise OracleError("grid oracle is limited to dimension <= 16")
    a, Q = scipy.linalg.eigh(M)
    a = np.clip(a, 0.0, None)
    c = Q.conj().T @ center
    b = Q.conj().T @ beta

    def cons(x):
        return np.sum(a * np.abs(x) ** 2, axis=-1) - np.real(np.sum(np.conj(b) * x, axis=-1))

    if cons(c) <= 0:
        return 0.0, center.copy()

    def x_of(lam):
        lam = np.asarray(lam, dtype=float)[..., None]
        return (c + 0.5 * lam * b) / (1.0 + lam * a)

    top = 1.0 if lam_hi is None else lam_hi
    while lam_hi is None and cons(x_of(top)) > 0:
        top *= 10.0
        if top > 1e12:
            raise OracleError("no sign change of the constraint below lambda = 1e12")
    grid = np.geomspace(1e-12, top, resolution)
    lo = hi = None
    prev = 0.0
    for start in range(0, resolution, 50_000):
        chunk = grid[start:start + 50_000]
        vals = cons(x_of(chunk))
        idx = np.flatnonzero(vals <= 0)
        if idx.size:
            hi = chunk[idx[0]]
            lo = chunk[idx[0] - 1] if idx[0] > 0 else prev
            break
        prev = chunk[-1]
    if hi is None:
        raise OracleError("no sign change on the lambda grid")
    lam = scipy.optimize.brentq(lambda t: float(cons(x_of(t))), lo, hi, xtol=1e-15, rtol=1e-14)
    return float(lam), Q @ x_of(lam)


# -- CI sets in the received-sample plane -----------------------------------

def _quadrant_signs(quadrant: int):
    table = {1: (1.0, 1.0), 2: (-1.0, 1.0), 3: (-1.0, -1.0), 4: (1.0, -1.0)}
    return table[quadrant]


def ci_member(tag: str, quadrant: int, phi: float, s_d: complex, scale: float, w, tol: float = 0.0):
    """Membership of received samples ``w`` in a CI region (independent test)."""
    w = np.asarray(w, dtype=complex)
    if tag == "PskCone":
        z = w * np.exp(-1j * np.angle(s_d)) - scale * abs(s_d)
        return (z.real >= -tol) & (np.abs(z.imag) <= z.real * np.tan(phi) + tol)
    d = w - scale * s_d
    sr, si = _quadrant_signs(quadrant)
    ok_re = {"ExactA": np.abs(d.real) <= tol, "EdgeB": np.abs(d.real) <= tol,
             "EdgeD": sr * d.real >= -tol, "CornerC": sr * d.real >= -tol}[tag]
    ok_im = {"ExactA": np.abs(d.imag) <= tol, "EdgeD": np.abs(d.imag) <= tol,
             "EdgeB": si * d.imag >= -tol, "CornerC": si * d.imag >= -tol}[tag]
    return ok_re & ok_im


def _boundary_rays(tag: str, quadrant: int, phi: float, s_d: complex, scale: float):
    """Rays ``apex + u * direction`` (u >= 0) covering the boundary of a CI region."""
    if tag == "PskCone":
        apex = scale * abs(s_d) * np.exp(1j * np.angle(s_d))
        return [(apex, np.exp(1j * (np.angle(s_d) + phi))), (apex, np.exp(1j * (np.angle(s_d) - phi)))]
    anchor = complex(scale * s_d)
    sr, si = _quadrant_signs(quadrant)
    if tag == "EdgeB":
        return [(anchor, 1j * si)]
    if tag == "EdgeD":
        return [(anchor, sr + 0j)]
    if tag == "CornerC":
        return [(anchor, sr + 0j), (anchor, 1j * si)]
    return [(anchor, 0j)]


def projection_oracle_2d(tag: str, quadrant: int, phi: float, s_d: complex, scale: float,
                         center: complex, points: int = 1001, rounds: int = 12) -> complex:
    """Nearest point of a CI region to ``center`` by grid search.

    A center inside the region is its own projection.  Otherwise the
    nearest point lies on the boundary, which is a union of rays; each ray
    is scanned on a grid that is repeatedly refined around its best point
    (the distance along a ray is unimodal, so refinement cannot lose the
    minimizer).
    """
    center = complex(center)
    if tag != "ExactA" and bool(ci_member(tag, quadrant, phi, s_d, scale, center)):
        return center
    best, best_d = None, np.inf
    for apex, direction in _boundary_rays(tag, quadrant, phi, s_d, scale):
        lo, hi = 0.0, 2.0 * abs(center - apex) + 1.0
        for _ in range(rounds):
            u = np.linspace(lo, hi, points)
            pts = apex + u * direction
            dist = np.abs(pts - center)
            k = int(np.argmin(dist))
            step = u[1] - u[0]
            lo, hi = max(0.0, u[k] - 2 * step), u[k] + 2 * step
        if dist[k] < best_d:
            best, best_d = pts[k], dist[k]
    return complex(best)


# -- convex projections and QPs ---------------------------------------------

def dykstra(center, projectors, iters: int = 100_000, tol: float = 1e-15):
    """Projection onto an intersection of convex sets by Dykstra's algorithm."""
    x = np.array(center, dtype=complex)
    inc = [np.zeros_like(x) for _ in projectors]
    for _ in range(iters):
        x_old = x.copy()
        for k, P in enumerate(projectors):
            y = P(x + inc[k])
            inc[k] = x + inc[k] - y
            x = y
        if np.max(np.abs(x - x_old)) <= tol * (1 + np.max(np.abs(x))):
            break
    return x


def disk_projector(radius):
    def P(x):
        m = np.abs(x)
        return np.where(m > radius, x * radius / np.where(m > 0, m, 1.0), x)
    return P


def halfspace_projector(w, tau):
    def P(x):
        gap = tau - np.real(np.conj(w) * x)
        return x + np.maximum(gap, 0.0) * w / np.abs(w) ** 2
    return P


@dataclass
class QpResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def qcqp_oracle(P, lin, project=None, x0=None, iters: int = 10**6, tol: float = 1e-13) -> QpResult:
    """Minimize ``x^H P x - Re(lin^H x)`` over a convex set by projected gradient.

    ``project`` maps a point to the feasible set (identity when omitted).
    The step is ``1 / (2 lambda_max(P))``; iteration stops when the update
    falls below ``tol`` relative to ``|x|``.
    """
    P = np.asarray(P, dtype=complex)
    lin = np.asarray(lin, dtype=complex)
    if P.shape[0] > 8:
        raise OracleError("qcqp oracle is limited to dimension <= 8")
    project = (lambda v: v) if project is None else project
    L = 2.0 * float(np.max(np.linalg.eigvalsh(0.5 * (P + P.conj().T))))
    if not L > 0:
        raise OracleError("objective must be strictly convex")
    x = project(np.zeros(P.shape[0], complex) if x0 is None else np.array(x0, dtype=complex))
    for k in range(1, iters + 1):
        grad = 2.0 * P @ x - lin
        x_new = project(x - grad / L)
        if not np.all(np.isfinite(x_new)):
            raise OracleError("projected gradient diverged")
        if np.linalg.norm(x_new - x) <= tol * (1 + np.linalg.norm(x)):
            x = x_new
            break
        x = x_new
    else:
        k = iters
    value = float(np.real(np.vdot(x, P @ x)) - np.real(np.vdot(lin, x)))
    return QpResult(x, value, k, k < iters)


# -- SER --------------------------------------------------------------------

def ser_oracle(received, truth_points, alphabet, snr_db, trials: int, seed: int = 1):
    """Symbol error rate by minimum-distance detection over an explicit alphabet.

    ``received`` are the noiseless received samples, ``truth_points`` the
    alphabet entries they should decode to.
    """
    rng = np.random.default_rng(seed)
    received = np.asarray(received)
    alphabet = np.asarray(alphabet)
    truth = np.array([int(np.argmin(np.abs(alphabet - t))) for t in truth_points])
    out = []
    for snr in np.atleast_1d(snr_db):
        sd = np.sqrt(10 ** (-snr / 10) / 2)
        errs = 0
        for _ in range(trials):
            r = received + rng.normal(0, sd, received.size) + 1j * rng.normal(0, sd, received.size)
            dec = np.argmin(np.abs(r[:, None] - alphabet[None, :]), axis=1)
            errs += int(np.count_nonzero(dec != truth))
        out.append(errs / (trials * received.size))
    return np.array(out)


# -- validation suites ------------------------------------------------------

@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    error: float
    tol: float
    detail: str = ""


def _tol(default: float) -> float:
    raw = os.environ.get(ENV_TOL)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        from .errors import ConfigurationError

        raise ConfigurationError(f"{ENV_TOL} must be a number, got {raw!r}") from exc


def _check(suite, name, error, default_tol, detail=""):
    tol = _tol(default_tol)
    return Check(suite, name, bool(error <= tol), float(error), tol, detail)


def _rand_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return A @ A.conj().T / rank


def suite_subproblems(seed: int = 0, count: int = 20):
    """b/p-type projections against the dense lambda scan."""
    from .subproblems import hermitian_eig, project_eig_constraint, solve_monotone_root

    rng = np.random.default_rng(seed)
    checks = []
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        M = _rand_psd(rng, n, int(rng.integers(1, n + 1)))
        beta = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        center = 2 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        eig = hermitian_eig(M)
        x_hat, _ = project_eig_constraint(eig.a, eig.to_basis(center), eig.to_basis(beta))
        x = eig.from_basis(x_hat)
        _, x_ref = grid_lambda_oracle(M, beta, center, resolution=200_000)
        d, d_ref = np.linalg.norm(x - center), np.linalg.norm(x_ref - center)
        worst = max(worst, abs(d - d_ref) / max(d_ref, 1e-12))
    checks.append(_check("subproblems", "quadratic projection vs lambda scan", worst, 1e-5))
    lam = solve_monotone_root(lambda t: np.exp(-t) - 0.5)
    checks.append(_check("subproblems", "root of exp(-x) - 1/2", abs(lam - np.log(2)), 1e-8))
    return checks


def suite_ci(seed: int = 0, count: int = 20):
    """Closed-form CI projections against the zooming grid search."""
    from . import ci

    rng = np.random.default_rng(seed)
    checks = []
    cases = [("PskCone", 0, np.pi / 4), ("PskCone", 0, np.pi / 8), ("ExactA", 1, 0.0)]
    cases += [(tag, q, 0.0) for tag in ("EdgeB", "EdgeD", "CornerC") for q in (1, 2, 3, 4)]
    for tag, quad, phi in cases:
        worst = 0.0
        for _ in range(count):
            h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            scale = float(rng.uniform(0.5, 2.0))
            if tag == "PskCone":
                s_d = np.exp(1j * rng.uniform(0, 2 * np.pi))
            else:
                sr, si = _quadrant_signs(quad)
                s_d = sr * rng.uniform(0.3, 1.0) + 1j * si * rng.uniform(0.3, 1.0)
            center = 2 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
            region = ci.CIRegion(tag, quad, phi)
            q = ci.project(ci.CIInstance(h, s_d, scale, region, center))
            hh = float(np.vdot(h, h).real)
            w_ref = projection_oracle_2d(tag, quad, phi, s_d, scale, complex(h @ center), points=201)
            d = np.linalg.norm(q - center)
            d_ref = abs(w_ref - h @ center) / np.sqrt(hh)
            worst = max(worst, abs(d - d_ref) / max(d_ref, 1e-12))
        checks.append(_check("ci", f"{tag} quadrant={quad} phi={phi:.4f} projection vs grid", worst, 1e-5))
    return checks


def suite_power(seed: int = 0, count: int = 50):
    """Halfspace-plus-disk element solver against Dykstra's algorithm."""
    from .subproblems import project_power

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        sbar = np.sqrt(rng.uniform(0.2, 0.3)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        w, tau, u = 2 * sbar, abs(sbar) ** 2 + 0.2, 0.3
        c = 0.8 * (rng.standard_normal() + 1j * rng.standard_normal())
        x = project_power(np.array([c]), np.array([w]), np.array([tau]), np.array([u]))[0]
        ref = dykstra(np.array([c]), [halfspace_projector(w, tau), disk_projector(np.sqrt(u))])[0]
        worst = max(worst, abs(x - ref))
    return [_check("power", "halfspace+disk element projection vs Dykstra", worst, 1e-7)]


def suite_qcqp(seed: int = 0):
    """Primal consensus step against projected gradient on its own quadratic."""
    from .subproblems import AdpmState, hermitian_eig, update_s_consensus

    rng = np.random.default_rng(seed)
    n, L = 4, 2
    G = _rand_psd(rng, n, 2)
    state = AdpmState.start(rng.standard_normal(n) + 0j, 1.0, L, 0.7)
    for name in ("b", "mu_b"):
        setattr(state, name, rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1))
    for name in ("p", "z", "mu_p", "mu_z"):
        setattr(state, name, rng.standard_normal(n) + 1j * rng.standard_normal(n))
    state.q = rng.standard_normal((L, n)) + 1j * rng.standard_normal((L, n))
    state.mu_q = rng.standard_normal((L, n)) + 1j * rng.standard_normal((L, n))
    state.rho_3 = np.array([0.5, 1.3])
    s_prox = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lam_g, lam_s = 0.8, 0.05
    s, _ = update_s_consensus(state, hermitian_eig(G), lam_g, s_prox, lam_s)
    # expand the augmented Lagrangian in s into x^H P x - Re(lin^H x)
    rhos = [state.rho_1, state.rho_2, *state.rho_3, state.rho_4]
    tgts = [state.b[:n] + state.mu_b[:n] / state.rho_1, state.p + state.mu_p / state.rho_2,
            *(state.q[l] + state.mu_q[l] / state.rho_3[l] for l in range(L)),
            state.z + state.mu_z / state.rho_4]
    P = lam_g * G + (lam_s + 0.5 * sum(rhos)) * np.eye(n)
    lin = 2 * lam_s * s_prox + sum(r * t for r, t in zip(rhos, tgts))
    ref = qcqp_oracle(P, lin, iters=200_000)
    err = np.linalg.norm(s - ref.x) / max(np.linalg.norm(ref.x), 1e-12)
    return [_check("qcqp", "consensus primal step vs projected gradient", err, 1e-6)]


def suite_model(seed: int = 0):
    """Beampattern and shift-operator identities on a small random scenario."""
    from .evaluation import imsr, imsr_grid
    from .model import build_beampattern_matrices, build_shift_operators, desk_scenario

    rng = np.random.default_rng(seed)
    sc = desk_scenario(seed, n_s=6, n_cp=2, num_symbols=4)
    beams = build_beampattern_matrices(sc)
    s = rng.standard_normal(sc.n_dim) + 1j * rng.standard_normal(sc.n_dim)
    q, qg = 10 ** (imsr(s, beams) / 10), 10 ** (imsr_grid(s, sc, beams.delta_sl) / 10)
    checks = [_check("model", "IMSR quadratic form vs grid sum", abs(q - qg) / qg, 1e-9)]
    ops = build_shift_operators(sc)
    a = np.exp(2j * np.pi * sc.element_spacing * np.arange(sc.n_t) * np.sin(np.deg2rad(sc.target_angle)))
    y = s.reshape(sc.n_s, sc.n_t) @ a.conj()
    y_cp = np.concatenate([y[sc.n_s - sc.n_cp:], y])
    err = np.max(np.abs(ops.zero_lag @ s - y_cp))
    checks.append(_check("model", "zero-lag operator reproduces the CP block", err, 1e-12))
    lam = scipy.linalg.eigh(beams.psi_sl, eigvals_only=True)[0]
    checks.append(_check("model", "sidelobe matrix loading", max(0.0, beams.delta_sl - 1e-9 - lam), 1e-12))
    return checks


def suite_eval(seed: int = 0, trials: int = 10_000):
    """SER simulator against an independent minimum-distance simulator."""
    from .evaluation import simulate_ser
    from .model import Constellation, desk_scenario

    checks = []
    for const in ("psk", "qam"):
        c = Constellation(const, 4 if const == "psk" else 16)
        sc = desk_scenario(seed, constellation=c, num_symbols=4)
        # a waveform whose received samples sit exactly on the scaled nominal points
        target = sc.ci_scale * sc.symbols
        s = np.linalg.lstsq(sc.channels, target, rcond=None)[0]
        snr = [0.0, 6.0]
        mine = simulate_ser(s, sc, snr, trials, seed=seed)
        ref = ser_oracle(sc.channels @ s, target, sc.ci_scale * c.points, snr, trials // 4, seed=seed + 1)
        n_ref = trials // 4 * sc.num_symbols
        hw_ref = 1.96 * np.sqrt(np.maximum(ref * (1 - ref), 1e-12) / n_ref)
        z = np.max(np.abs(mine.ser - ref) / np.sqrt(mine.half_width**2 + hw_ref**2 + 1e-18))
        checks.append(_check("eval", f"{const} SER vs independent simulator (half-widths)", float(z), 3.0))
    return checks


SUITES = {
    "subproblems": suite_subproblems,
    "ci": suite_ci,
    "power": suite_power,
    "qcqp": suite_qcqp,
    "model": suite_model,
    "eval": suite_eval,
}


def run_validation(filters=None, seed: int = 0) -> list[Check]:
    """Run the selected suites (all when ``filters`` is empty)."""
    names = list(SUITES) if not filters else list(filters)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        from .errors import ConfigurationError

        raise ConfigurationError(f"unknown validation suite(s) {unknown}; choose from {sorted(SUITES)}")
    out = []
    for n in names:
        out.extend(SUITES[n](seed=seed))
    return out
