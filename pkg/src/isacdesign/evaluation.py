"""Radar and communication metrics of a finished design.

Every quantity here is recomputed from the waveform, the filter and the
neighbouring blocks; nothing is read back from solver internals, so the
functions double as consistency checks on the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ci import CIBatch
from .errors import DomainError
from .model import BeampatternMatrices, Scenario, ShiftOperators, steering_matrix

DB_FLOOR = -300.0


def to_db(x):
    """``10 log10`` with a floor at -300 dB."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(np.maximum(x, 0.0)), DB_FLOOR)


# -- beampattern ------------------------------------------------------------

def beampattern(s, scenario: Scenario) -> np.ndarray:
    """Transmit power toward every grid angle, ``sum_n |a(theta)^H s_n|^2``."""
    S = np.asarray(s).reshape(scenario.n_s, scenario.n_t)
    A = steering_matrix(scenario, scenario.angle_grid)
    return np.sum(np.abs(S @ A.conj()) ** 2, axis=0)


def imsr(s, beams: BeampatternMatrices) -> float:
    """IMSR in dB from the quadratic forms."""
    s = np.asarray(s)
    if not np.any(s):
        raise DomainError("IMSR of the zero waveform is undefined")
    num = np.real(np.vdot(s, beams.psi_ml @ s))
    den = np.real(np.vdot(s, beams.psi_sl @ s))
    return float(10 * np.log10(num / den))


def imsr_grid(s, scenario: Scenario, delta_sl: float) -> float:
    """IMSR in dB by direct summation of the beampattern over the angle grid."""
    s = np.asarray(s)
    if not np.any(s):
        raise DomainError("IMSR of the zero waveform is undefined")
    bp = beampattern(s, scenario)
    ml = np.sum(bp[scenario.mainlobe_mask()])
    sl = np.sum(bp[scenario.sidelobe_mask()]) + delta_sl * np.real(np.vdot(s, s))
    return float(10 * np.log10(ml / sl))


# -- range profile ----------------------------------------------------------

@dataclass
class RangeProfile:
    """Filter outputs per lag; ``lags`` are offsets from perfect alignment.

    ``own`` covers every lag; ``pre`` (lags >= 0) and ``post`` (lags <= 0)
    hold the leakage of the previous and next block.
    """

    lags: np.ndarray
    own: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    pre_lags: np.ndarray
    post_lags: np.ndarray

    @property
    def zero_lag(self) -> complex:
        return complex(self.own[self.lags == 0][0])

    def sidelobes(self) -> np.ndarray:
        return np.concatenate([self.own[self.lags != 0], self.pre, self.post])

    @property
    def own_sidelobe_energy(self) -> float:
        return float(np.sum(np.abs(self.own[self.lags != 0]) ** 2))

    @property
    def peak_sidelobe_db(self) -> float:
        """Largest non-zero-lag output power, in dB relative to the zero-lag peak."""
        peak = np.max(np.abs(self.sidelobes()) ** 2)
        return float(to_db(peak / abs(self.zero_lag) ** 2))

    def db(self, part: str) -> np.ndarray:
        return to_db(np.abs(getattr(self, part)) ** 2 / abs(self.zero_lag) ** 2)


def range_profile(g, s, s_pre, s_post, ops: ShiftOperators) -> RangeProfile:
    """Outputs ``g^H G_n x`` for the own block and both neighbours."""
    n = np.arange(1, ops.count + 1)
    zl = ops.zero_lag_index
    gc = np.conj(np.asarray(g))
    own = ops.apply_all(s) @ gc
    pre = (ops.apply_all(s_pre) @ gc)[n >= zl]
    post = (ops.apply_all(s_post) @ gc)[n <= zl]
    lags = n - zl
    return RangeProfile(lags, own, pre, post, lags[n >= zl], lags[n <= zl])


# -- PAPR -------------------------------------------------------------------

@dataclass
class PaprReport:
    papr_db: np.ndarray
    min_power: float
    max_power: float
    bounds: tuple

    @property
    def within_bounds(self) -> bool:
        lo, hi = self.bounds
        return bool(self.min_power >= lo - 1e-6 and self.max_power <= hi + 1e-6)


def papr(s, scenario: Scenario) -> PaprReport:
    """Per-antenna peak-to-average power ratio and the per-sample power range."""
    s = np.asarray(s)
    if not np.any(s):
        raise DomainError("PAPR of the zero waveform is undefined")
    P = np.abs(s.reshape(scenario.n_s, scenario.n_t)) ** 2
    ratio = P.max(axis=0) / P.mean(axis=0)
    return PaprReport(to_db(ratio), float(P.min()), float(P.max()), scenario.power_bounds)


# -- communication ----------------------------------------------------------

def ci_margins(s, scenario: Scenario) -> np.ndarray:
    """Per-symbol minimum signed CI slack (equalities count as ``-|residual|``)."""
    return CIBatch.from_scenario(scenario).margins(s)


@dataclass
class SerResult:
    snr_db: np.ndarray
    ser: np.ndarray
    half_width: np.ndarray
    trials: int
    symbols_per_trial: int


def _detect(r, scenario: Scenario) -> np.ndarray:
    """Indices of the decided constellation points."""
    const = scenario.constellation
    pts = const.points
    if const.is_psk:
        # angular sector decision around each nominal phase
        k = np.round((np.angle(r) - const.offset) / (2 * np.pi / const.order))
        return np.mod(k, const.order).astype(int)
    scaled = scenario.ci_scale * pts
    return np.argmin(np.abs(r[..., None] - scaled), axis=-1)


def simulate_ser(s, scenario: Scenario, snr_db, trials: int = 10_000, seed: int = 0) -> SerResult:
    """Monte-Carlo symbol error rate under circular Gaussian receiver noise.

    At each SNR point the noise power is ``10^(-snr/10)``.  Every trial
    transmits the block once, so the estimate pools ``trials * L``
    decisions; the half-width is the normal-approximation 95% interval.
    """
    if trials < 10_000:
        raise DomainError("simulate_ser needs at least 1e4 trials")
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    rng = np.random.default_rng(seed)
    w = scenario.channels @ np.asarray(s)
    truth = np.array([np.argmin(np.abs(scenario.constellation.points - d)) for d in scenario.symbols])
    L = w.size
    ser, hw = [], []
    for snr in snr_db:
        sigma2 = 10 ** (-snr / 10)
        errors = 0
        for start in range(0, trials, 2000):
            m = min(2000, trials - start)
            noise = np.sqrt(sigma2 / 2) * (rng.standard_normal((m, L)) + 1j * rng.standard_normal((m, L)))
            errors += int(np.sum(_detect(w + noise, scenario) != truth))
        n = trials * L
        p = errors / n
        ser.append(p)
        hw.append(1.96 * np.sqrt(max(p * (1 - p), 0.0) / n))
    return SerResult(snr_db, np.array(ser), np.array(hw), trials, L)


# -- full report ------------------------------------------------------------

@dataclass
class EvaluationReport:
    imsr_db: float
    imsr_grid_db: float
    angles: np.ndarray
    beampattern_db: np.ndarray
    profile: RangeProfile
    peak_sidelobe_db: float
    papr: PaprReport
    ci_margins: np.ndarray
    feasibility: dict
    side_energy_identity: float
    imsr_identity: float
    ser: SerResult | None = None
    extras: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return bool(max(self.feasibility.values()) <= 1e-6)


def evaluate(ws, s, t, g, s_pre, s_post, *, G_side=None, snr_db=None, trials: int = 10_000,
             seed: int = 0) -> EvaluationReport:
    """Compute every metric for one block.

    ``g`` may be any scaling of the filter; the profile is reported for the
    filter normalized to unit zero-lag response.
    """
    from .ao import build_G_side, normalized_filter

    sc = ws.scenario
    ops = ws.problem.shifts
    beams = ws.problem.beams
    g_unit = normalized_filter(g, s, ops)
    prof = range_profile(g_unit, s, s_pre, s_post, ops)
    G = build_G_side(g_unit, ops) if G_side is None else G_side
    side_qf = float(np.real(np.vdot(s, G @ s)))
    side_err = abs(side_qf - prof.own_sidelobe_energy) / max(abs(side_qf), 1e-300)
    q = imsr(s, beams)
    q_grid = imsr_grid(s, sc, beams.delta_sl)
    lin, lin_grid = 10 ** (q / 10), 10 ** (q_grid / 10)
    bp = beampattern(s, sc)
    ser = simulate_ser(s, sc, snr_db, trials, seed) if snr_db is not None else None
    return EvaluationReport(
        imsr_db=q, imsr_grid_db=q_grid, angles=sc.angle_grid.copy(),
        beampattern_db=to_db(bp / sc.n_s), profile=prof, peak_sidelobe_db=prof.peak_sidelobe_db,
        papr=papr(s, sc), ci_margins=ci_margins(s, sc), feasibility=ws.feasibility(s, t, g),
        side_energy_identity=side_err, imsr_identity=abs(lin - lin_grid) / lin, ser=ser,
    )
