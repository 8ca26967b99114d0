"""Fixed problem data: array geometry, beampattern and lag-shift operators.

Waveforms are stacked time-major: ``s[n * n_t + k]`` is the sample sent by
antenna ``k`` at time ``n``.  All operators in this module act on that
layout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Constellation:
    """PSK or square-QAM alphabet.

    PSK points sit at ``exp(j(2 pi m / M + offset))`` with unit magnitude;
    QAM points are normalized to unit average energy.
    """

    kind: str
    order: int
    phase_offset: float | None = None

    def __post_init__(self):
        if self.kind not in ("psk", "qam"):
            raise ConfigurationError(f"unknown constellation kind {self.kind!r}")
        if self.kind == "psk" and self.order < 3:
            raise ConfigurationError("PSK needs order >= 3 (decision half-angle < 90 deg)")
        if self.kind == "qam":
            side = int(round(np.sqrt(self.order)))
            if side * side != self.order or side < 2:
                raise ConfigurationError("only square QAM orders are supported")

    @property
    def is_psk(self) -> bool:
        return self.kind == "psk"

    @property
    def phi(self) -> float:
        """Half-angle of a PSK decision sector."""
        if not self.is_psk:
            raise DomainError("phi is defined for PSK only")
        return np.pi / self.order

    @property
    def offset(self) -> float:
        if self.phase_offset is not None:
            return float(self.phase_offset)
        return np.pi / 4 if self.order == 4 else 0.0

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.order)))

    @property
    def qam_scale(self) -> float:
        # average energy of the odd-integer grid {+-1, +-3, ...}^2 is 2(M-1)/3
        return float(np.sqrt(2.0 * (self.order - 1) / 3.0))

    @property
    def points(self) -> np.ndarray:
        if self.is_psk:
            m = np.arange(self.order)
            return np.exp(1j * (2 * np.pi * m / self.order + self.offset))
        levels = np.arange(-(self.side - 1), self.side, 2, dtype=float)
        re, im = np.meshgrid(levels, levels, indexing="ij")
        return ((re + 1j * im) / self.qam_scale).ravel()


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable description of one design problem.

    Attributes
    ----------
    n_t, n_s, n_cp : int
        Antennas, samples per block and cyclic-prefix length.
    element_spacing : float
        Uniform linear array spacing in wavelengths.
    angle_grid : ndarray
        Beampattern evaluation angles in degrees.
    mainlobe : tuple of (lo, hi)
        Closed mainlobe intervals in degrees.
    sidelobe_gap : float
        Transition band (degrees) on each side of the mainlobe excluded
        from the sidelobe region.
    target_angle : float
        Direction of the point scatterer used for the range profile.
    p0, epsilon : float
        Total per-snapshot power and per-sample relaxation; every sample
        power must lie in ``[(1 - eps) p0 / n_t, (1 + eps) p0 / n_t]``.
    eta : float
        Zero-lag peak-preservation coefficient.
    lambda_g, lambda_s : float
        Range-sidelobe weight and SCA proximal weight.
    delta_sl_rel : float
        Sidelobe matrix loading relative to its mean diagonal.
    gamma_u, noise_power : float
        SINR threshold (linear) and receiver noise power.
    constellation : Constellation
    symbols : ndarray, shape (L,)
        Nominal constellation points carried by the block.
    channels : ndarray, shape (L, n_s * n_t)
        Effective channel row for each symbol.
    """

    n_t: int
    n_s: int
    n_cp: int
    constellation: Constellation
    symbols: np.ndarray
    channels: np.ndarray
    element_spacing: float = 0.5
    angle_grid: np.ndarray = field(default_factory=lambda: np.arange(-90.0, 91.0))
    mainlobe: tuple = ((-15.0, 15.0),)
    sidelobe_gap: float = 0.0
    target_angle: float = 0.0
    p0: float = 1.0
    epsilon: float = 0.2
    eta: float = 0.0
    lambda_g: float = 1.0
    lambda_s: float | None = None
    delta_sl_rel: float = 1e-6
    gamma_u: float = 10.0
    noise_power: float = 0.1

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("angle_grid", _frozen(self.angle_grid, float))
        set_("symbols", _frozen(self.symbols, complex).ravel())
        set_("channels", _frozen(np.atleast_2d(self.channels), complex))
        set_("mainlobe", tuple((float(lo), float(hi)) for lo, hi in self.mainlobe))
        if self.lambda_s is None:
            set_("lambda_s", 1e-3 * self.lambda_g)
        self.validate()

    def validate(self):
        if self.n_t < 1:
            raise ConfigurationError("n_t must be >= 1")
        if self.n_s < 2:
            raise ConfigurationError("n_s must be >= 2")
        if not 0 <= self.n_cp < self.n_s:
            raise ConfigurationError("n_cp must satisfy 0 <= n_cp < n_s")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError("epsilon must lie in [0, 1)")
        if self.delta_sl_rel <= 0:
            raise ConfigurationError("delta_sl_rel must be > 0")
        if self.lambda_s <= 0:
            raise ConfigurationError("lambda_s must be > 0")
        if self.lambda_g < 0 or self.eta < 0:
            raise ConfigurationError("lambda_g and eta must be >= 0")
        if self.p0 <= 0 or self.noise_power <= 0 or self.gamma_u <= 0:
            raise ConfigurationError("p0, noise_power and gamma_u must be > 0")
        grid = self.angle_grid
        if grid.ndim != 1 or grid.size == 0 or np.any(np.abs(grid) > 90):
            raise ConfigurationError("angle_grid must be a non-empty list within +-90 deg")
        if not self.mainlobe:
            raise ConfigurationError("at least one mainlobe interval is required")
        for lo, hi in self.mainlobe:
            if lo > hi or lo < grid.min() or hi > grid.max():
                raise ConfigurationError(f"mainlobe interval ({lo}, {hi}) outside the grid span")
        if abs(self.target_angle) > 90:
            raise ConfigurationError("target_angle must be within +-90 deg")
        if self.channels.shape != (self.symbols.size, self.n_dim):
            raise ConfigurationError(
                f"channels must have shape (L, {self.n_dim}), got {self.channels.shape}")
        if np.any(np.linalg.norm(self.channels, axis=1) == 0):
            raise ConfigurationError("every channel vector must be nonzero")
        if np.any(self.symbols == 0):
            raise ConfigurationError("nominal symbols must be nonzero")

    @property
    def n_dim(self) -> int:
        """Length of the stacked waveform."""
        return self.n_s * self.n_t

    @property
    def block_len(self) -> int:
        """Samples per CP-extended block, also the filter length."""
        return self.n_s + self.n_cp

    @property
    def num_symbols(self) -> int:
        return self.symbols.size

    @property
    def power_bounds(self) -> tuple[float, float]:
        nominal = self.p0 / self.n_t
        return (1 - self.epsilon) * nominal, (1 + self.epsilon) * nominal

    @property
    def ci_scale(self) -> float:
        """``sqrt(Gamma_u sigma^2)``, the received-symbol scale."""
        return float(np.sqrt(self.gamma_u * self.noise_power))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def mainlobe_mask(self) -> np.ndarray:
        g = self.angle_grid
        mask = np.zeros(g.size, dtype=bool)
        for lo, hi in self.mainlobe:
            mask |= (g >= lo) & (g <= hi)
        return mask

    def sidelobe_mask(self) -> np.ndarray:
        g = self.angle_grid
        keep = np.ones(g.size, dtype=bool)
        for lo, hi in self.mainlobe:
            keep &= ~((g >= lo - self.sidelobe_gap) & (g <= hi + self.sidelobe_gap))
        return keep


def steering_vector(scenario: Scenario, theta) -> np.ndarray:
    """ULA response ``exp(j 2 pi d k sin(theta))`` for ``k = 0 .. n_t - 1``."""
    theta = float(theta)
    if abs(theta) > 90:
        raise DomainError(f"angle {theta} deg outside [-90, 90]")
    k = np.arange(scenario.n_t)
    return np.exp(2j * np.pi * scenario.element_spacing * k * np.sin(np.deg2rad(theta)))


def steering_matrix(scenario: Scenario, angles) -> np.ndarray:
    """Columns are steering vectors for ``angles``; shape (n_t, len(angles))."""
    return np.stack([steering_vector(scenario, a) for a in np.atleast_1d(angles)], axis=1)


@dataclass(frozen=True, eq=False)
class BeampatternMatrices:
    psi_ml: np.ndarray
    psi_sl: np.ndarray
    grid_weights: np.ndarray
    delta_sl: float


def build_beampattern_matrices(scenario: Scenario) -> BeampatternMatrices:
    """Mainlobe and sidelobe energy matrices on the stacked waveform.

    ``s^H psi_ml s`` is the mainlobe-integrated transmit beampattern
    ``sum_theta w_theta sum_n |a(theta)^H s_n|^2``.  The sidelobe matrix
    carries diagonal loading so that it is strictly positive definite.
    """
    ml, sl = scenario.mainlobe_mask(), scenario.sidelobe_mask()
    if not ml.any():
        raise ConfigurationError("mainlobe region contains no grid angle")
    if not sl.any():
        raise ConfigurationError("sidelobe region contains no grid angle")
    weights = np.ones(scenario.angle_grid.size)
    A = steering_matrix(scenario, scenario.angle_grid)
    eye = np.eye(scenario.n_s)
    r_ml = (A[:, ml] * weights[ml]) @ A[:, ml].conj().T
    r_sl = (A[:, sl] * weights[sl]) @ A[:, sl].conj().T
    psi_ml = np.kron(eye, r_ml)
    psi_sl = np.kron(eye, r_sl)
    delta = scenario.delta_sl_rel * np.trace(psi_sl).real / scenario.n_dim
    psi_sl = psi_sl + delta * np.eye(scenario.n_dim)
    return BeampatternMatrices(_frozen(psi_ml), _frozen(psi_sl), _frozen(weights), float(delta))


@dataclass(frozen=True, eq=False)
class ShiftOperators:
    """Lag-window maps from waveform space to filter space.

    ``mats[n - 1]`` holds the operator with 1-based index ``n``; index
    ``zero_lag_index`` is perfect alignment.  The operator at lag
    ``l = n - zero_lag_index`` returns ``y[m + l]`` of the CP-extended,
    angle-combined block ``y`` (zero outside the block).
    """

    mats: np.ndarray
    zero_lag_index: int

    @property
    def count(self) -> int:
        return self.mats.shape[0]

    def __getitem__(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.count:
            raise IndexError(n)
        return self.mats[n - 1]

    @property
    def zero_lag(self) -> np.ndarray:
        return self.mats[self.zero_lag_index - 1]

    def indices(self) -> range:
        return range(1, self.count + 1)

    def apply_all(self, s) -> np.ndarray:
        """Stack of ``G_n s`` for every n; shape (count, block_len)."""
        return self.mats @ np.asarray(s)


def cp_extension(n_s: int, n_cp: int) -> np.ndarray:
    """Matrix prepending the last ``n_cp`` samples; shape (n_s + n_cp, n_s)."""
    E = np.zeros((n_s + n_cp, n_s))
    E[:n_cp, n_s - n_cp:] = np.eye(n_cp)
    E[n_cp:, :] = np.eye(n_s)
    return E


def angle_combiner(scenario: Scenario) -> np.ndarray:
    """Maps the stacked waveform to the far-field signal toward the target."""
    a = steering_vector(scenario, scenario.target_angle)
    return np.kron(np.eye(scenario.n_s), a.conj()[None, :])


def build_shift_operators(scenario: Scenario) -> ShiftOperators:
    M = scenario.block_len
    base = cp_extension(scenario.n_s, scenario.n_cp) @ angle_combiner(scenario)
    mats = np.zeros((2 * M - 1, M, scenario.n_dim), dtype=complex)
    for n in range(1, 2 * M):
        lag = n - M
        for m in range(M):
            if 0 <= m + lag < M:
                mats[n - 1, m] = base[m + lag]
    return ShiftOperators(_frozen(mats), M)


@dataclass(frozen=True, eq=False)
class SelectionOperators:
    """Selectors on the stacked variable ``[s; t]``."""

    c_s: np.ndarray
    c_t: np.ndarray

    def basis(self, m: int) -> np.ndarray:
        """Standard basis vector ``e_m`` in waveform space (0-based m)."""
        e = np.zeros(self.c_s.shape[0])
        e[m] = 1.0
        return e


def build_selection_operators(scenario: Scenario) -> SelectionOperators:
    N = scenario.n_dim
    c_s = np.hstack([np.eye(N), np.zeros((N, 1))])
    c_t = np.zeros(N + 1)
    c_t[-1] = 1.0
    return SelectionOperators(_frozen(c_s), _frozen(c_t))


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Everything derived from a scenario that stays fixed during a design."""

    scenario: Scenario
    beams: BeampatternMatrices
    shifts: ShiftOperators
    selectors: SelectionOperators


def build_problem(scenario: Scenario) -> ProblemData:
    return ProblemData(
        scenario,
        build_beampattern_matrices(scenario),
        build_shift_operators(scenario),
        build_selection_operators(scenario),
    )


# -- random scenario ingredients --------------------------------------------

def ofdm_channels(n_t: int, n_s: int, num_symbols: int, rng, taps: int = 4) -> np.ndarray:
    """Per-subcarrier effective channels of a multipath MISO link.

    Symbol ``l`` rides on subcarrier ``l``; its effective row combines the
    unitary DFT row with the channel frequency response, so that
    ``channels[l] @ s`` is the demodulated subcarrier output.
    """
    if num_symbols > n_s:
        raise ConfigurationError("one symbol per subcarrier: need L <= n_s")
    h_taps = (rng.standard_normal((taps, n_t)) + 1j * rng.standard_normal((taps, n_t)))
    h_taps /= np.sqrt(2 * taps)
    n = np.arange(n_s)
    rows = []
    for l in range(num_symbols):
        freq = np.exp(-2j * np.pi * l * np.arange(taps) / n_s) @ h_taps
        dft = np.exp(-2j * np.pi * l * n / n_s) / np.sqrt(n_s)
        rows.append(np.kron(dft, freq))
    return np.array(rows)


def rayleigh_channels(n_t: int, n_s: int, num_symbols: int, rng) -> np.ndarray:
    shape = (num_symbols, n_s * n_t)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def draw_symbols(constellation: Constellation, num_symbols: int, rng) -> np.ndarray:
    pts = constellation.points
    return pts[rng.integers(0, pts.size, num_symbols)]


def desk_scenario(seed: int = 0, **overrides) -> Scenario:
    """Default small benchmark: 4 antennas, 16 samples, CP 4, QPSK, L = 16."""
    rng = np.random.default_rng(seed)
    n_t, n_s, n_cp = overrides.pop("n_t", 4), overrides.pop("n_s", 16), overrides.pop("n_cp", 4)
    L = overrides.pop("num_symbols", 16)
    const = overrides.pop("constellation", Constellation("psk", 4))
    params = dict(
        n_t=n_t, n_s=n_s, n_cp=n_cp, constellation=const,
        symbols=draw_symbols(const, L, rng),
        channels=ofdm_channels(n_t, n_s, L, rng),
        mainlobe=((-15.0, 15.0),), sidelobe_gap=10.0,
        p0=1.0, epsilon=0.2, gamma_u=10.0, noise_power=0.1, lambda_g=1.0,
    )
    params.update(overrides)
    params.setdefault("eta", 1.0 / ((n_s + n_cp) * n_t * params["p0"]))
    return Scenario(**params)
