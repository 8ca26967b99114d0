"""Constructive-interference regions and their exact Euclidean projections.

Every CI constraint acts on the received sample ``w = h^T q`` only.  A
projection therefore moves ``q`` along ``conj(h)``, and each closed form
below is a KKT branch of the corresponding small QP.  Branches are tried in
a fixed order; the first one that is primal and dual feasible is the
unique minimizer because the problem is strongly convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Constellation

FEAS_TOL = 1e-9

PSK_CONE = "PskCone"
EXACT_A = "ExactA"
EDGE_B = "EdgeB"
CORNER_C = "CornerC"
EDGE_D = "EdgeD"


@dataclass(frozen=True)
class CIRegion:
    tag: str
    quadrant: int = 0
    phi: float = 0.0

    @property
    def signs(self) -> tuple[int, int]:
        """Outward direction (real, imag) of the one-sided QAM bounds."""
        return {1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}.get(self.quadrant, (0, 0))


@dataclass(frozen=True, eq=False)
class CIInstance:
    h: np.ndarray
    s_d: complex
    ci_scale: float
    region: CIRegion
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=complex).ravel())
        object.__setattr__(self, "center", np.asarray(self.center, dtype=complex).ravel())
        if not np.any(self.h):
            raise DomainError("channel vector is zero")
        if self.s_d == 0:
            raise DomainError("nominal symbol must be nonzero")

    @property
    def hh(self) -> float:
        return float(np.vdot(self.h, self.h).real)


@dataclass(frozen=True)
class KKTSolution:
    q: np.ndarray
    case: int
    multipliers: tuple


def _quadrant(z: complex) -> int:
    if z.real > 0:
        return 1 if z.imag > 0 else 4
    return 2 if z.imag > 0 else 3


def classify_point(constellation: Constellation, s_d: complex) -> CIRegion:
    """Assign a nominal point to its CI region class."""
    pts = constellation.points
    if np.min(np.abs(pts - s_d)) > 1e-9:
        raise DomainError(f"{s_d} is not a point of {constellation.kind}-{constellation.order}")
    if constellation.is_psk:
        return CIRegion(PSK_CONE, 0, constellation.phi)
    edge = (constellation.side - 1) / constellation.qam_scale
    on_re = abs(abs(s_d.real) - edge) < 1e-9
    on_im = abs(abs(s_d.imag) - edge) < 1e-9
    quad = _quadrant(complex(s_d))
    if on_re and on_im:
        return CIRegion(CORNER_C, quad)
    if on_im:
        return CIRegion(EDGE_B, quad)
    if on_re:
        return CIRegion(EDGE_D, quad)
    return CIRegion(EXACT_A, quad)


def ci_slacks(region: CIRegion, w, s_d: complex, ci_scale: float):
    """Signed slacks of the CI constraints at received sample(s) ``w``.

    Returns ``(ineq, eq)``: inequality slacks (>= 0 when satisfied) and
    equality residuals (0 when satisfied), each with a trailing axis.
    """
    w = np.asarray(w, dtype=complex)
    if region.tag == PSK_CONE:
        gamma = ci_scale * abs(s_d)
        T = np.tan(region.phi)
        v = w * np.exp(-1j * np.angle(s_d))
        upper = T * (v.real - gamma) - v.imag
        lower = T * (v.real - gamma) + v.imag
        return np.stack([upper, lower], axis=-1), np.zeros(w.shape + (0,))
    d = w - ci_scale * s_d
    sr, si = region.signs
    if region.tag == EXACT_A:
        return np.zeros(w.shape + (0,)), np.stack([d.real, d.imag], axis=-1)
    if region.tag == EDGE_B:
        return (si * d.imag)[..., None], d.real[..., None]
    if region.tag == EDGE_D:
        return (sr * d.real)[..., None], d.imag[..., None]
    if region.tag == CORNER_C:
        return np.stack([sr * d.real, si * d.imag], axis=-1), np.zeros(w.shape + (0,))
    raise DomainError(f"unknown region {region.tag}")


def ci_margin(region: CIRegion, w, s_d: complex, ci_scale: float):
    """Minimum signed slack; equalities contribute ``-|residual|``."""
    ineq, eq = ci_slacks(region, w, s_d, ci_scale)
    parts = [ineq, -np.abs(eq)]
    return np.min(np.concatenate(parts, axis=-1), axis=-1)


def is_feasible(inst: CIInstance, q, tol: float = FEAS_TOL) -> bool:
    w = inst.h @ np.asarray(q)
    scale = max(1.0, inst.ci_scale * abs(inst.s_d), abs(w))
    return bool(ci_margin(inst.region, w, inst.s_d, inst.ci_scale) >= -tol * scale)


# -- PSK ---------------------------------------------------------------------

def solve_psk_kkt(inst: CIInstance, order=(1, 2, 3, 4)) -> KKTSolution:
    """Projection onto the rotated PSK cone by KKT case enumeration."""
    if inst.region.tag != PSK_CONE:
        raise DomainError("solve_psk_kkt needs a PskCone instance")
    phi = inst.region.phi
    if not 0 < phi < np.pi / 2:
        raise DomainError("PSK half-angle must lie in (0, pi/2)")
    T = np.tan(phi)
    c, h, hh = inst.center, inst.h, inst.hh
    rot = np.exp(1j * np.angle(inst.s_d))
    gamma = inst.ci_scale * abs(inst.s_d)
    wc = np.vdot(rot, h @ c)  # e^{-j angle s_D} h^T c
    direction = rot * h.conj()
    # constraint values at the center, positive when violated
    zeta1 = -np.real((T + 1j) * wc) + gamma * T
    zeta2 = -np.real((T - 1j) * wc) + gamma * T
    tol = FEAS_TOL * max(1.0, gamma * T, abs(wc))

    def candidate(case):
        if case == 1:
            return c, (0.0, 0.0)
        if case == 2:
            lam2 = 2 * zeta2 / (hh * (T**2 + 1))
            q = c + zeta2 * direction / ((T - 1j) * hh)
            return q, (0.0, lam2)
        if case == 3:
            lam1 = 2 * zeta1 / (hh * (T**2 + 1))
            q = c + zeta1 * direction / ((T + 1j) * hh)
            return q, (lam1, 0.0)
        K = 0.5 * hh * np.array([[T**2 + 1, T**2 - 1], [T**2 - 1, T**2 + 1]])
        lam1, lam2 = np.linalg.solve(K, [zeta1, zeta2])
        q = c + (gamma - wc) * direction / hh
        return q, (float(lam1), float(lam2))

    for case in order:
        q, lams = candidate(case)
        if min(lams) < -tol:
            continue
        w = np.vdot(rot, h @ q)
        v1 = -np.real((T + 1j) * w) + gamma * T
        v2 = -np.real((T - 1j) * w) + gamma * T
        if v1 <= tol and v2 <= tol:
            return KKTSolution(q, case, lams)
    q, lams = candidate(4)
    return KKTSolution(q, 4, lams)


def project_psk(inst: CIInstance) -> np.ndarray:
    return solve_psk_kkt(inst).q


# -- QAM ---------------------------------------------------------------------

def _qam_parts(inst: CIInstance):
    c, h, hh = inst.center, inst.h, inst.hh
    u = h @ c - inst.ci_scale * inst.s_d
    tol = FEAS_TOL * max(1.0, inst.ci_scale * abs(inst.s_d), abs(h @ c))
    return c, h.conj() / hh, u, hh, tol


def project_qam_A(inst: CIInstance) -> np.ndarray:
    """Interior point: both received coordinates pinned."""
    if inst.region.tag != EXACT_A:
        raise DomainError("project_qam_A needs an ExactA instance")
    c, hdir, u, _, _ = _qam_parts(inst)
    return c - u * hdir


def _one_sided_edge(inst: CIInstance, pinned: str) -> KKTSolution:
    c, hdir, u, hh, tol = _qam_parts(inst)
    sr, si = inst.region.signs
    if pinned == "re":
        q0 = c - u.real * hdir
        slack = si * (inst.h @ q0 - inst.ci_scale * inst.s_d).imag
        lam = -2 * si * u.imag / hh
    else:
        q0 = c - 1j * u.imag * hdir
        slack = sr * (inst.h @ q0 - inst.ci_scale * inst.s_d).real
        lam = -2 * sr * u.real / hh
    if slack >= -tol:
        return KKTSolution(q0, 1, (0.0,))
    return KKTSolution(c - u * hdir, 2, (lam,))


def solve_qam_B(inst: CIInstance) -> KKTSolution:
    if inst.region.tag != EDGE_B:
        raise DomainError("project_qam_B needs an EdgeB instance")
    return _one_sided_edge(inst, "re")


def solve_qam_D(inst: CIInstance) -> KKTSolution:
    if inst.region.tag != EDGE_D:
        raise DomainError("project_qam_D needs an EdgeD instance")
    return _one_sided_edge(inst, "im")


def project_qam_B(inst: CIInstance) -> np.ndarray:
    """Horizontal edge: real part pinned, imaginary part bounded outward."""
    return solve_qam_B(inst).q


def project_qam_D(inst: CIInstance) -> np.ndarray:
    """Vertical edge: imaginary part pinned, real part bounded outward."""
    return solve_qam_D(inst).q


def solve_qam_C(inst: CIInstance, order=((0, 0), (0, 1), (1, 0), (1, 1))) -> KKTSolution:
    """Corner point: two outward one-sided bounds, four KKT branches."""
    if inst.region.tag != CORNER_C:
        raise DomainError("project_qam_C needs a CornerC instance")
    c, hdir, u, hh, tol = _qam_parts(inst)
    sr, si = inst.region.signs
    lam_re = -2 * sr * u.real / hh
    lam_im = -2 * si * u.imag / hh
    for k, (act_re, act_im) in enumerate(order, start=1):
        shift = (u.real if act_re else 0.0) + 1j * (u.imag if act_im else 0.0)
        q = c - shift * hdir
        lams = (lam_re if act_re else 0.0, lam_im if act_im else 0.0)
        if min(lams) < -tol:
            continue
        d = inst.h @ q - inst.ci_scale * inst.s_d
        if sr * d.real >= -tol and si * d.imag >= -tol:
            return KKTSolution(q, k, lams)
    return KKTSolution(c - u * hdir, 4, (lam_re, lam_im))


def project_qam_C(inst: CIInstance) -> np.ndarray:
    return solve_qam_C(inst).q


def project(inst: CIInstance) -> np.ndarray:
    """Dispatch to the projection matching the instance's region."""
    tag = inst.region.tag
    if tag == PSK_CONE:
        return project_psk(inst)
    if tag == EXACT_A:
        return project_qam_A(inst)
    if tag == EDGE_B:
        return project_qam_B(inst)
    if tag == EDGE_D:
        return project_qam_D(inst)
    if tag == CORNER_C:
        return project_qam_C(inst)
    raise DomainError(f"unknown region {tag}")


# -- batched form ------------------------------------------------------------

def project_received(region: CIRegion, w, s_d, ci_scale: float, tighten: float = 0.0):
    """Nearest point of the CI set in the received-sample plane.

    Because a projection only moves ``q`` along ``conj(h)``, the distance
    ``|q - c|`` equals ``|h^T q - h^T c| / |h|``; projecting ``q`` is thus
    equivalent to projecting the scalar ``w = h^T c`` in the plane.

    ``tighten >= 0`` shrinks the inequality parts of the set (the PSK apex
    moves outward by the factor ``1 + tighten``, one-sided QAM bounds move
    outward by ``tighten * ci_scale``); equalities are never shifted.
    """
    w = np.asarray(w, dtype=complex)
    if region.tag == PSK_CONE:
        rot = np.exp(1j * np.angle(s_d))
        v = w / rot
        x, y = v.real - (1.0 + tighten) * ci_scale * np.abs(s_d), v.imag
        c, s = np.cos(region.phi), np.sin(region.phi)
        inside = np.abs(y) <= x * np.tan(region.phi)
        along = np.maximum(x * c + np.abs(y) * s, 0.0)
        px = np.where(inside, x, along * c)
        py = np.where(inside, y, along * s * np.sign(y))
        return (px + (1.0 + tighten) * ci_scale * np.abs(s_d) + 1j * py) * rot
    d = w - ci_scale * s_d
    sr, si = region.signs
    pin_re = region.tag in (EXACT_A, EDGE_B)
    pin_im = region.tag in (EXACT_A, EDGE_D)
    m = tighten * ci_scale
    re = np.zeros_like(d.real) if pin_re else sr * np.maximum(sr * d.real, m)
    im = np.zeros_like(d.imag) if pin_im else si * np.maximum(si * d.imag, m)
    return ci_scale * s_d + re + 1j * im


@dataclass(frozen=True, eq=False)
class CIBatch:
    """All CI constraints of one block, projected together.

    Rows of ``H`` are the channel vectors; ``regions[l]`` is the class of
    ``symbols[l]``.  Symbols sharing a region class are handled in one
    vectorized call.
    """

    H: np.ndarray
    symbols: np.ndarray
    ci_scale: float
    regions: tuple
    tighten: float = 0.0

    @classmethod
    def from_scenario(cls, scenario, tighten: float = 0.0) -> "CIBatch":
        regions = tuple(classify_point(scenario.constellation, s) for s in scenario.symbols)
        return cls(np.asarray(scenario.channels), np.asarray(scenario.symbols),
                   scenario.ci_scale, regions, float(tighten))

    def tightened(self, tighten: float) -> "CIBatch":
        return CIBatch(self.H, self.symbols, self.ci_scale, self.regions, float(tighten))

    def __post_init__(self):
        if np.any(np.linalg.norm(self.H, axis=1) == 0):
            raise DomainError("channel vector is zero")
        groups = {}
        for l, r in enumerate(self.regions):
            groups.setdefault(r, []).append(l)
        object.__setattr__(self, "_groups", {r: np.array(ix) for r, ix in groups.items()})
        object.__setattr__(self, "_hh", np.sum(np.abs(self.H) ** 2, axis=1))

    def received(self, x) -> np.ndarray:
        """``h_l^T x_l`` for a stack ``x`` of shape (L, N), or ``h_l^T x`` for one vector."""
        x = np.asarray(x)
        return np.sum(self.H * x, axis=-1) if x.ndim == 2 else self.H @ x

    def project(self, centers) -> np.ndarray:
        centers = np.asarray(centers, dtype=complex)
        w = self.received(centers)
        target = np.empty_like(w)
        for region, ix in self._groups.items():
            target[ix] = project_received(region, w[ix], self.symbols[ix], self.ci_scale, self.tighten)
        return centers + ((target - w) / self._hh)[:, None] * self.H.conj()

    def margins(self, s) -> np.ndarray:
        """Per-symbol minimum signed slack at waveform ``s``."""
        w = self.received(s)
        out = np.empty(w.size)
        for region, ix in self._groups.items():
            out[ix] = ci_margin(region, w[ix], self.symbols[ix], self.ci_scale)
        return out

    def equality_rows(self):
        """Real linear system ``A [Re s; Im s] = b`` collecting all pinned coordinates."""
        rows, rhs = [], []
        for l, r in enumerate(self.regions):
            h, target = self.H[l], self.ci_scale * self.symbols[l]
            # Re(h^T s) = Re(h) Re(s) - Im(h) Im(s); Im(h^T s) = Im(h) Re(s) + Re(h) Im(s)
            if r.tag in (EXACT_A, EDGE_B):
                rows.append(np.concatenate([h.real, -h.imag]))
                rhs.append(target.real)
            if r.tag in (EXACT_A, EDGE_D):
                rows.append(np.concatenate([h.imag, h.real]))
                rhs.append(target.imag)
        n = 2 * self.H.shape[1]
        return np.array(rows).reshape(-1, n), np.array(rhs)
