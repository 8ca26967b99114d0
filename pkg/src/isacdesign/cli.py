"""Command-line front end: ``isacdesign {design,evaluate,validate,sweep,config}``.

Exit codes: 0 success, 1 configuration or input error, 2 infeasible
problem or design, 3 solver-consistency failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ao import BlockContext, build_G_side, interleaved_schedule, normalized_filter
from .config import DESK_YAML, RunConfig, SolverConfig, load_config, run_config_from_dict
from .errors import (
    ConfigurationError,
    DegenerateWaveformError,
    DivergenceError,
    DomainError,
    InitializationError,
    PreconditionError,
    SolverConsistencyError,
    SurrogateInfeasibleError,
)
from .evaluation import evaluate, range_profile
from .oracle import SUITES, run_validation
from .sca import Workspace
from .serialize import (
    TraceLog,
    design_to_dict,
    dump_json,
    load_design,
    pack_complex,
    scenario_from_dict,
    unpack_complex,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3, 4
ENV_LOG = "ISACDESIGN_LOG_LEVEL"
SWEEP_KEYS = ("eta", "eta_rel", "lambda_g", "epsilon")

log = logging.getLogger("isacdesign")


# -- helpers ----------------------------------------------------------------

def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _block_summary(ws, res, init_ctx: BlockContext) -> dict:
    """Initial-vs-final metrics of one block (initial uses the matched filter)."""
    ops = ws.problem.shifts
    rep = evaluate(ws, res.s, res.t, res.g, res.ctx.s_pre, res.ctx.s_post)
    g0 = ws.scenario.eta * (ops.zero_lag @ res.s_init)
    base = evaluate(ws, res.s_init, ws.ratio(res.s_init), g0, init_ctx.s_pre, init_ctx.s_post)
    return {
        "index": res.index,
        "ao_iterations": res.ao_iterations,
        "stop_reason": res.stop_reason,
        "imsr_db_initial": base.imsr_db,
        "imsr_db": rep.imsr_db,
        "peak_sidelobe_db_initial": base.peak_sidelobe_db,
        "peak_sidelobe_db": rep.peak_sidelobe_db,
        "papr_db_max": float(np.max(rep.papr.papr_db)),
        "min_ci_margin": float(np.min(rep.ci_margins)),
        "feasible": rep.feasible,
        "g_obj_final": float(res.g_obj_trace[-1]),
    }


def _write_traces(out: Path, blocks) -> None:
    write_csv(out / "ao_trace.csv", ["block", "iteration", "g_obj"],
              [(r.index, i, v) for r in blocks for i, v in enumerate(r.g_obj_trace)])
    write_csv(out / "sca_trace.csv", ["block", "ao_iteration", "sca_iteration", "f"],
              [(r.index, i, j, v) for r in blocks for i, tr in enumerate(r.sca_traces, 1)
               for j, v in enumerate(tr)])


# -- subcommands ------------------------------------------------------------

def cmd_design(rc: RunConfig, out: Path, *, threads: int, figures: bool) -> int:
    trace = TraceLog(out / "trace.jsonl")
    try:
        sched = interleaved_schedule(rc.scenario, rc.num_blocks, rc.solver, threads=threads, trace=trace)
    finally:
        trace.close()
    dump_json(design_to_dict(sched, sched.workspaces, rc.scenario, rc.solver), out / "design.json")
    _write_traces(out, sched.blocks)
    summary = [_block_summary(ws, r, sched.initial_neighbours(r.index))
               for ws, r in zip(sched.workspaces, sched.blocks)]
    dump_json({"blocks": summary}, out / "summary.json")
    if figures:
        from .plotting import plot_convergence

        plot_convergence({f"block {r.index}": r.g_obj_trace for r in sched.blocks}, out / "convergence.png")
    for row in summary:
        print(f"block {row['index']}: IMSR {row['imsr_db_initial']:.2f} -> {row['imsr_db']:.2f} dB, "
              f"peak sidelobe {row['peak_sidelobe_db_initial']:.2f} -> {row['peak_sidelobe_db']:.2f} dB, "
              f"AO iterations {row['ao_iterations']}, feasible {row['feasible']}")
    return EXIT_OK if all(r["feasible"] for r in summary) else EXIT_INFEASIBLE


def cmd_evaluate(rc: RunConfig, design_path, out: Path, *, snr_db, trials: int, figures: bool) -> int:
    d = load_design(design_path)
    base = scenario_from_dict(d["scenario"])
    try:
        solver = SolverConfig(**d["solver"])
    except TypeError as exc:
        raise ConfigurationError(f"malformed solver record: {exc}") from exc
    rows, reports = [], {}
    boundary = [unpack_complex(v) for v in d.get("boundary", [])]
    for b in d["blocks"]:
        idx = int(b["index"])
        sc = base.replace(symbols=unpack_complex(b["symbols"]))
        ws = Workspace.build(sc, solver)
        s, g, t = unpack_complex(b["s"]), unpack_complex(b["g"]), float(b["t"])
        s_pre, s_post = unpack_complex(b["s_pre"]), unpack_complex(b["s_post"])
        if s.size != sc.n_dim or g.size != sc.block_len or s_pre.size != sc.n_dim or s_post.size != sc.n_dim:
            raise ConfigurationError(f"block {idx}: vector sizes do not match the scenario")
        rep = evaluate(ws, s, t, g, s_pre, s_post, snr_db=snr_db, trials=trials, seed=rc.solver.seed + idx)
        reports[idx] = rep
        prof = rep.profile
        write_csv(out / f"block{idx}_beampattern.csv", ["angle_deg", "power_db"],
                  zip(rep.angles, rep.beampattern_db))
        write_csv(out / f"block{idx}_range_profile.csv", ["lag", "db", "source"],
                  [(l, v, "own") for l, v in zip(prof.lags, prof.db("own"))]
                  + [(l, v, "pre") for l, v in zip(prof.pre_lags, prof.db("pre"))]
                  + [(l, v, "post") for l, v in zip(prof.post_lags, prof.db("post"))])
        write_csv(out / f"block{idx}_ser.csv", ["snr_db", "ser", "half_width"],
                  zip(rep.ser.snr_db, rep.ser.ser, rep.ser.half_width))
        rows.append({
            "index": idx,
            "imsr_db": rep.imsr_db,
            "imsr_grid_db": rep.imsr_grid_db,
            "peak_sidelobe_db": rep.peak_sidelobe_db,
            "zero_lag": pack_complex([prof.zero_lag]),
            "papr_db": [float(v) for v in rep.papr.papr_db],
            "min_power": rep.papr.min_power,
            "max_power": rep.papr.max_power,
            "ci_margins": [float(v) for v in rep.ci_margins],
            "feasibility": rep.feasibility,
            "feasible": rep.feasible,
            "side_energy_identity": rep.side_energy_identity,
            "imsr_identity": rep.imsr_identity,
            "ser": {"snr_db": rep.ser.snr_db.tolist(), "ser": rep.ser.ser.tolist(),
                    "half_width": rep.ser.half_width.tolist(), "trials": rep.ser.trials},
        })
        if figures:
            from .evaluation import beampattern, to_db
            from .plotting import plot_beampattern, plot_range_profile

            s0 = unpack_complex(b["s_init"]) if "s_init" in b else None
            init_db = to_db(beampattern(s0, sc) / sc.n_s) if s0 is not None else None
            plot_beampattern(rep.angles, rep.beampattern_db, init_db, sc.mainlobe,
                             out / f"block{idx}_beampattern.png")
            baseline = None
            if s0 is not None:
                r0 = ws.problem.shifts.zero_lag @ s0
                baseline = range_profile(r0 / np.vdot(r0, r0).real, s0, s_pre * 0, s_post * 0,
                                         ws.problem.shifts)
            plot_range_profile(prof, baseline, out / f"block{idx}_range_profile.png")
    if figures and reports:
        from .plotting import plot_ser

        plot_ser({f"block {k}": r.ser for k, r in reports.items()}, out / "ser.png")
    dump_json({"blocks": rows, "boundary_blocks": len(boundary)}, out / "evaluation.json")
    for r in rows:
        print(f"block {r['index']}: IMSR {r['imsr_db']:.2f} dB, peak sidelobe {r['peak_sidelobe_db']:.2f} dB, "
              f"min CI margin {min(r['ci_margins']):.3g}, feasible {r['feasible']}")
    return EXIT_OK if all(r["feasible"] for r in rows) else EXIT_INFEASIBLE


def cmd_validate(filters, seed: int, out: Path | None) -> int:
    checks = run_validation(filters, seed=seed)
    width = max(len(c.name) for c in checks)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.suite:<12} {c.name:<{width}}  error={c.error:.3e}  tol={c.tol:.1e}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    if out is not None:
        write_csv(out / "validation.csv", ["suite", "check", "passed", "error", "tol"],
                  [(c.suite, c.name, c.passed, c.error, c.tol) for c in checks])
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def _parse_grid(items) -> dict:
    grid = {}
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep or key not in SWEEP_KEYS:
            raise ConfigurationError(f"--grid expects KEY=v1,v2,... with KEY in {SWEEP_KEYS}, got {item!r}")
        try:
            grid[key] = [float(v) for v in values.split(",") if v]
        except ValueError as exc:
            raise ConfigurationError(f"non-numeric value in --grid {item!r}") from exc
    return grid


def cmd_sweep(rc: RunConfig, out: Path, grid: dict, *, threads: int) -> int:
    grid = grid or {k: list(v) for k, v in rc.sweep.items()}
    if not grid:
        raise ConfigurationError("sweep needs a parameter grid (run.sweep in the config or --grid)")
    bad = set(grid) - set(SWEEP_KEYS)
    if bad:
        raise ConfigurationError(f"sweep keys must be among {SWEEP_KEYS}, got {sorted(bad)}")
    keys = sorted(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        raw = dict(rc.scenario_raw)
        point = dict(zip(keys, (float(v) for v in values)))
        if "eta" in point:
            raw.pop("eta_rel", None)
        if "eta_rel" in point:
            raw.pop("eta", None)
        raw.update(point)
        row = dict(point)
        try:
            sc = run_config_from_dict(raw, {}).scenario
            sched = interleaved_schedule(sc, rc.num_blocks, rc.solver, threads=threads)
        except (InitializationError, SurrogateInfeasibleError, DegenerateWaveformError) as exc:
            row.update(status="infeasible", detail=str(exc))
            rows.append(row)
            continue
        summ = [_block_summary(ws, r, sched.initial_neighbours(r.index))
                for ws, r in zip(sched.workspaces, sched.blocks)]
        row.update(
            status="ok",
            imsr_db_mean=float(np.mean([s["imsr_db"] for s in summ])),
            peak_sidelobe_db_max=float(np.max([s["peak_sidelobe_db"] for s in summ])),
            papr_db_max=float(np.max([s["papr_db_max"] for s in summ])),
            min_ci_margin=float(np.min([s["min_ci_margin"] for s in summ])),
            feasible=all(s["feasible"] for s in summ),
            ao_iterations=int(sum(s["ao_iterations"] for s in summ)),
        )
        rows.append(row)
        print(" ".join(f"{k}={row[k]:g}" for k in keys),
              f"IMSR {row['imsr_db_mean']:.2f} dB, peak sidelobe {row['peak_sidelobe_db_max']:.2f} dB")
    cols = keys + ["status", "imsr_db_mean", "peak_sidelobe_db_max", "papr_db_max", "min_ci_margin",
                   "feasible", "ao_iterations"]
    write_csv(out / "sweep.csv", cols, [[r.get(c, "") for c in cols] for r in rows])
    dump_json({"grid": {k: grid[k] for k in keys}, "points": rows}, out / "sweep.json")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isacdesign", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default=None, help=f"logging level (default from ${ENV_LOG}, else WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="design all blocks of a scenario")
    d.add_argument("config", help="YAML scenario/run file")
    d.add_argument("-o", "--output-dir", default=None)
    d.add_argument("--blocks", type=int, default=None, help="override run.num_blocks")
    d.add_argument("--threads", type=int, default=None, help="workers per interleaving pass")
    d.add_argument("--seed", type=int, default=None, help="override the solver seed")
    d.add_argument("--figures", action="store_true", help="also render PNG figures")

    e = sub.add_parser("evaluate", help="compute metrics of a design file")
    e.add_argument("config")
    e.add_argument("design", help="design.json written by 'design'")
    e.add_argument("-o", "--output-dir", default=None)
    e.add_argument("--snr", type=float, nargs="+", default=None, help="SNR grid in dB")
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--figures", action="store_true")

    v = sub.add_parser("validate", help="run the brute-force oracle suites")
    v.add_argument("config", nargs="?", default=None, help="optional; only its run.seed is used")
    v.add_argument("--filter", action="append", choices=sorted(SUITES), help="suite to run (repeatable)")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("-o", "--output-dir", default=None)

    s = sub.add_parser("sweep", help="design over a grid of eta / lambda_g / epsilon")
    s.add_argument("config")
    s.add_argument("-o", "--output-dir", default=None)
    s.add_argument("--grid", action="append", help="KEY=v1,v2,... (repeatable)")
    s.add_argument("--blocks", type=int, default=None)
    s.add_argument("--threads", type=int, default=None)

    sub.add_parser("config", help="print the default desk-scenario configuration")
    return p


def _setup_logging(level) -> None:
    name = (level or os.environ.get(ENV_LOG) or "WARNING").upper()
    if not isinstance(logging.getLevelName(name), int):
        raise ConfigurationError(f"unknown log level {name!r}")
    logging.basicConfig(level=name, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("isacdesign").setLevel(name)


def _with_overrides(rc: RunConfig, args) -> RunConfig:
    import dataclasses

    changes = {}
    if getattr(args, "blocks", None) is not None:
        if args.blocks < 1:
            raise ConfigurationError("--blocks must be >= 1")
        changes["num_blocks"] = args.blocks
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        changes["threads"] = args.threads
    if getattr(args, "seed", None) is not None:
        changes["solver"] = rc.solver.replace(seed=args.seed)
    return dataclasses.replace(rc, **changes) if changes else rc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging(args.log_level)
        if args.command == "config":
            sys.stdout.write(DESK_YAML)
            return EXIT_OK
        if args.command == "validate":
            seed = args.seed
            if seed is None:
                seed = load_config(args.config).solver.seed if args.config else 0
            out = _outdir(args.output_dir) if args.output_dir else None
            return cmd_validate(args.filter, seed, out)
        rc = _with_overrides(load_config(args.config), args)
        out = _outdir(args.output_dir or rc.output_dir)
        if args.command == "design":
            return cmd_design(rc, out, threads=rc.threads, figures=args.figures)
        if args.command == "evaluate":
            if args.trials is not None and args.trials < 10_000:
                raise ConfigurationError("--trials must be >= 10000")
            snr = tuple(args.snr) if args.snr else rc.snr_db
            return cmd_evaluate(rc, args.design, out, snr_db=snr, trials=args.trials or rc.ser_trials,
                                figures=args.figures)
        if args.command == "sweep":
            return cmd_sweep(rc, out, _parse_grid(args.grid), threads=rc.threads)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InitializationError, SurrogateInfeasibleError, DegenerateWaveformError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverConsistencyError, DivergenceError) as exc:
        print(f"solver consistency failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG  # unreachable: argparse enforces a subcommand


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
