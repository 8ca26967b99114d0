"""Solver settings and YAML scenario/run configuration loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .model import Constellation, Scenario, desk_scenario, draw_symbols, ofdm_channels, rayleigh_channels


@dataclass(frozen=True)
class SolverConfig:
    """Iteration caps, tolerances and penalty schedule for AO / SCA / ADPM."""

    adpm_max_iter: int = 500
    adpm_tol: float = 1e-5
    rho0: float = 0.01
    rho_growth: float = 1.1
    rho_max: float = 1e6
    sca_max_iter: int = 50
    sca_tol: float = 1e-6
    ao_max_iter: int = 30
    ao_min_iter: int = 10
    ao_tol: float = 1e-5
    monotone_slack: float = 1e-8
    feas_tol: float = 1e-6
    peak_backoff: float = 1e-3
    ci_backoff: float = 1e-3
    power_backoff: float = 1e-3
    filter_loading: float = 1e-8
    check_surrogate_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("adpm_tol", "sca_tol", "ao_tol", "feas_tol", "rho0", "rho_max"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("peak_backoff", "ci_backoff", "power_backoff", "filter_loading"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.ao_min_iter < 0:
            raise ConfigurationError("ao_min_iter must be >= 0")
        if self.rho_growth < 1:
            raise ConfigurationError("rho_growth must be >= 1")
        if min(self.adpm_max_iter, self.sca_max_iter, self.ao_max_iter) < 1:
            raise ConfigurationError("iteration caps must be >= 1")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


SCENARIO_KEYS = {
    "n_t", "n_s", "n_cp", "element_spacing", "angle_min", "angle_max", "angle_step",
    "mainlobe", "sidelobe_gap", "target_angle", "p0", "epsilon", "eta", "eta_rel",
    "lambda_g", "lambda_s", "delta_sl_rel", "gamma_u", "gamma_u_db", "noise_power",
    "constellation", "order", "num_symbols", "channel_model", "channel_taps", "seed",
}

RUN_KEYS = {"num_blocks", "threads", "output_dir", "snr_db", "ser_trials", "sweep"} | {
    f.name for f in dataclasses.fields(SolverConfig)
}


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    solver: SolverConfig
    num_blocks: int = 3
    threads: int = 1
    output_dir: str = "out"
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    ser_trials: int = 10000
    sweep: dict = field(default_factory=dict)
    source: str = ""
    scenario_raw: dict = field(default_factory=dict)


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a scenario from the flat key schema documented in the README."""
    unknown = set(cfg) - SCENARIO_KEYS
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    n_t, n_s, n_cp = int(cfg.get("n_t", 4)), int(cfg.get("n_s", 16)), int(cfg.get("n_cp", 4))
    L = int(cfg.get("num_symbols", 16))
    const = Constellation(str(cfg.get("constellation", "psk")).lower(), int(cfg.get("order", 4)))
    symbols = draw_symbols(const, L, rng)
    model = cfg.get("channel_model", "ofdm")
    if model == "ofdm":
        channels = ofdm_channels(n_t, n_s, L, rng, taps=int(cfg.get("channel_taps", 4)))
    elif model == "rayleigh":
        channels = rayleigh_channels(n_t, n_s, L, rng)
    else:
        raise ConfigurationError(f"unknown channel_model {model!r}")
    grid = np.arange(float(cfg.get("angle_min", -90)), float(cfg.get("angle_max", 90)) + 1e-9,
                     float(cfg.get("angle_step", 1.0)))
    mainlobe = cfg.get("mainlobe", [[-15.0, 15.0]])
    if mainlobe and np.isscalar(mainlobe[0]):
        mainlobe = [mainlobe]
    p0 = float(cfg.get("p0", 1.0))
    if "eta" in cfg:
        eta = float(cfg["eta"])
    else:
        eta = float(cfg.get("eta_rel", 1.0)) / ((n_s + n_cp) * n_t * p0)
    gamma_u = 10 ** (float(cfg["gamma_u_db"]) / 10) if "gamma_u_db" in cfg else float(cfg.get("gamma_u", 10.0))
    try:
        return Scenario(
            n_t=n_t, n_s=n_s, n_cp=n_cp, constellation=const, symbols=symbols, channels=channels,
            element_spacing=float(cfg.get("element_spacing", 0.5)), angle_grid=grid,
            mainlobe=tuple(tuple(iv) for iv in mainlobe),
            sidelobe_gap=float(cfg.get("sidelobe_gap", 10.0)),
            target_angle=float(cfg.get("target_angle", 0.0)), p0=p0,
            epsilon=float(cfg.get("epsilon", 0.2)), eta=eta,
            lambda_g=float(cfg.get("lambda_g", 1.0)),
            lambda_s=None if cfg.get("lambda_s") is None else float(cfg["lambda_s"]),
            delta_sl_rel=float(cfg.get("delta_sl_rel", 1e-6)), gamma_u=gamma_u,
            noise_power=float(cfg.get("noise_power", 0.1)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> RunConfig:
    """Read a YAML file with ``scenario:`` and optional ``run:`` sections."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    unknown = set(raw) - {"scenario", "run"}
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    return run_config_from_dict(raw.get("scenario") or {}, raw.get("run") or {}, source=str(path))


def run_config_from_dict(scenario_cfg: dict, run_cfg: dict, source: str = "") -> RunConfig:
    unknown = set(run_cfg) - RUN_KEYS
    if unknown:
        raise ConfigurationError(f"unknown run keys: {sorted(unknown)}")
    solver_fields = {f.name for f in dataclasses.fields(SolverConfig)}
    try:
        solver = SolverConfig(**{k: v for k, v in run_cfg.items() if k in solver_fields})
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    extra = {k: v for k, v in run_cfg.items() if k not in solver_fields}
    if "snr_db" in extra:
        extra["snr_db"] = tuple(float(x) for x in extra["snr_db"])
    try:
        rc = RunConfig(scenario=scenario_from_dict(scenario_cfg), solver=solver, source=source,
                       scenario_raw=dict(scenario_cfg), **extra)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    if rc.num_blocks < 1:
        raise ConfigurationError("num_blocks must be >= 1")
    if rc.ser_trials < 10_000:
        raise ConfigurationError("ser_trials must be >= 10000")
    if rc.threads < 1:
        raise ConfigurationError("threads must be >= 1")
    return rc


DESK_YAML = """\
# Desk benchmark: 4-antenna ULA, 16 samples + 4 CP, QPSK on 16 subcarriers.
scenario:
  n_t: 4
  n_s: 16
  n_cp: 4
  element_spacing: 0.5
  angle_min: -90
  angle_max: 90
  angle_step: 1
  mainlobe: [[-15, 15]]
  sidelobe_gap: 10
  target_angle: 0
  p0: 1.0
  epsilon: 0.2
  eta_rel: 1.0
  lambda_g: 1.0
  gamma_u: 10.0
  noise_power: 0.1
  constellation: psk
  order: 4
  num_symbols: 16
  channel_model: ofdm
  seed: 0
run:
  num_blocks: 3
  seed: 0
"""


__all__ = [
    "SolverConfig", "RunConfig", "scenario_from_dict", "load_config", "run_config_from_dict",
    "DESK_YAML", "desk_scenario",
]
