"""On-disk formats: design JSON, trace JSON lines and CSV tables.

Complex vectors are stored as interleaved ``[re0, im0, re1, im1, ...]``
float arrays.  JSON is written with sorted keys and no timestamps, so the
same inputs always produce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .errors import ConfigurationError
from .model import Constellation, Scenario

DESIGN_FORMAT = "isacdesign.design/1"


def pack_complex(x) -> list:
    x = np.asarray(x, dtype=complex).ravel()
    out = np.empty(2 * x.size)
    out[0::2], out[1::2] = x.real, x.imag
    return out.tolist()


def unpack_complex(v, shape=None) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size % 2:
        raise ConfigurationError("complex arrays must be flat interleaved re/im lists of even length")
    z = a[0::2] + 1j * a[1::2]
    return z if shape is None else z.reshape(shape)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "n_t": sc.n_t, "n_s": sc.n_s, "n_cp": sc.n_cp,
        "constellation": {"kind": sc.constellation.kind, "order": sc.constellation.order,
                          "phase_offset": sc.constellation.phase_offset},
        "symbols": pack_complex(sc.symbols),
        "channels": pack_complex(sc.channels),
        "element_spacing": sc.element_spacing,
        "angle_grid": sc.angle_grid.tolist(),
        "mainlobe": [list(iv) for iv in sc.mainlobe],
        "sidelobe_gap": sc.sidelobe_gap, "target_angle": sc.target_angle,
        "p0": sc.p0, "epsilon": sc.epsilon, "eta": sc.eta,
        "lambda_g": sc.lambda_g, "lambda_s": sc.lambda_s, "delta_sl_rel": sc.delta_sl_rel,
        "gamma_u": sc.gamma_u, "noise_power": sc.noise_power,
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        c = d["constellation"]
        L = len(d["symbols"]) // 2
        return Scenario(
            n_t=d["n_t"], n_s=d["n_s"], n_cp=d["n_cp"],
            constellation=Constellation(c["kind"], c["order"], c.get("phase_offset")),
            symbols=unpack_complex(d["symbols"]),
            channels=unpack_complex(d["channels"], (L, d["n_s"] * d["n_t"])),
            element_spacing=d["element_spacing"], angle_grid=np.asarray(d["angle_grid"]),
            mainlobe=tuple(tuple(iv) for iv in d["mainlobe"]), sidelobe_gap=d["sidelobe_gap"],
            target_angle=d["target_angle"], p0=d["p0"], epsilon=d["epsilon"], eta=d["eta"],
            lambda_g=d["lambda_g"], lambda_s=d["lambda_s"], delta_sl_rel=d["delta_sl_rel"],
            gamma_u=d["gamma_u"], noise_power=d["noise_power"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed scenario record: {exc!r}") from exc


def _floats(x):
    return [float(v) for v in x]


def block_to_dict(res, ws) -> dict:
    """Serializable record of one designed block."""
    from .ao import normalized_filter

    ops = ws.problem.shifts
    return {
        "index": res.index,
        "symbols": pack_complex(res.scenario.symbols),
        "s": pack_complex(res.s),
        "t": float(res.t),
        "g": pack_complex(res.g),
        "g_unit": pack_complex(normalized_filter(res.g, res.s, ops)),
        "s_pre": pack_complex(res.ctx.s_pre),
        "s_post": pack_complex(res.ctx.s_post),
        "s_init": pack_complex(res.s_init),
        "g_init": pack_complex(res.g_init),
        "g_obj_trace": _floats(res.g_obj_trace),
        "sca_f_traces": [_floats(tr) for tr in res.sca_traces],
        "adpm_iterations": [[int(k) for k in run] for run in res.adpm_iters],
        "adpm_final_residuals": [[{k: float(v) for k, v in d.items()} for d in run]
                                 for run in res.adpm_residuals],
        "feasibility": {k: float(v) for k, v in res.feasibility.items()},
        "identity_errors": _floats(res.identity_errors),
        "lambda_max": float(res.lam_max),
        "stop_reason": res.stop_reason,
    }


def design_to_dict(schedule, workspaces, scenario: Scenario, solver: SolverConfig) -> dict:
    return {
        "format": DESIGN_FORMAT,
        "scenario": scenario_to_dict(scenario),
        "solver": dataclasses.asdict(solver),
        "boundary": [pack_complex(schedule.boundary[0]), pack_complex(schedule.boundary[1])],
        "blocks": [block_to_dict(r, ws) for r, ws in zip(schedule.blocks, workspaces)],
    }


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def load_design(path) -> dict:
    """Read a design file and check its top-level structure."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"design file {path} does not exist")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"design file {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict) or d.get("format") != DESIGN_FORMAT:
        raise ConfigurationError(f"{path} is not a {DESIGN_FORMAT} file")
    for key in ("scenario", "blocks", "solver"):
        if key not in d:
            raise ConfigurationError(f"design file lacks '{key}'")
    needed = {"index", "symbols", "s", "t", "g", "s_pre", "s_post"}
    for b in d["blocks"]:
        missing = needed - set(b)
        if missing:
            raise ConfigurationError(f"block record lacks {sorted(missing)}")
    return d


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class TraceLog:
    """JSON-lines diagnostics sink; one record per solver event."""

    def __init__(self, path=None):
        self._fh = open(path, "w") if path is not None else None
        self.records = []

    def __call__(self, record: dict) -> None:
        rec = json.loads(json.dumps(record, default=float))
        self.records.append(rec)
        if self._fh is not None:
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
