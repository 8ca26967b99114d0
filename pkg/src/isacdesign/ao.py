"""Outer alternating optimization between receive filter and waveform.

The filter step is solved in closed form; the waveform step is delegated
to :func:`isacdesign.sca.sca_solve`.  The objective

    g_obj(g, s, t) = -t + lambda_g g^H D(s) g

never increases across AO iterations, which is asserted at run time.

Filter normalization
--------------------
The filter and waveform are coupled by the peak-preservation constraint
``Re(g^H r) >= eta |r|^2`` with ``r = G0 s`` the aligned return.  For a
fixed ``s`` the minimizer of ``g^H D g`` under this constraint is the
distortionless (minimum-variance) filter scaled by ``eta |r|^2``, so the
reported filter, divided by its zero-lag response, is exactly the
distortionless filter.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ci import project_received
from .config import SolverConfig
from .errors import (
    ConfigurationError,
    DegenerateWaveformError,
    InitializationError,
    SolverConsistencyError,
)
from .model import Scenario, ShiftOperators, draw_symbols
from .sca import Workspace, objective, sca_solve
from .subproblems import hermitian_eig

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BlockContext:
    """Fixed neighbouring waveforms of the block being designed."""

    s_pre: np.ndarray
    s_post: np.ndarray
    index: int = 1

    @classmethod
    def isolated(cls, n_dim: int, index: int = 1) -> "BlockContext":
        z = np.zeros(n_dim, dtype=complex)
        return cls(z, z, index)


def _masks(ops: ShiftOperators):
    n = np.arange(1, ops.count + 1)
    zl = ops.zero_lag_index
    return n != zl, n >= zl, n <= zl


def build_D(s, ctx: BlockContext, ops: ShiftOperators) -> np.ndarray:
    """Filter-space matrix collecting own sidelobes and neighbour leakage."""
    own, pre, post = _masks(ops)
    Y = ops.apply_all(s)[own]
    P = ops.apply_all(ctx.s_pre)[pre]
    Q = ops.apply_all(ctx.s_post)[post]
    stack = np.vstack([Y, P, Q])
    return stack.T @ stack.conj()


def update_filter(s, ctx: BlockContext, ops: ShiftOperators, delta_rel: float = 1e-8,
                  D: np.ndarray | None = None) -> np.ndarray:
    """Distortionless minimizer of ``g^H D g`` subject to ``g^H r = 1``.

    ``D`` is loaded by ``delta_rel * trace(D) / dim`` before inversion.
    """
    r = ops.zero_lag @ s
    if not np.any(np.abs(r) > 0):
        raise DegenerateWaveformError("waveform has no zero-lag return toward the target")
    D = build_D(s, ctx, ops) if D is None else D
    dim = D.shape[0]
    delta = delta_rel * np.real(np.trace(D)) / dim
    if delta <= 0:
        delta = delta_rel
    x = np.linalg.solve(D + delta * np.eye(dim), r)
    return x / np.conj(np.vdot(r, x))


def build_G_side(g, ops: ShiftOperators) -> np.ndarray:
    """``sum_{n != zero lag} G_n^H g g^H G_n`` on waveform space."""
    own, _, _ = _masks(ops)
    V = ops.mats[own].conj().transpose(0, 2, 1) @ np.asarray(g)  # rows G_n^H g
    return V.T @ V.conj()


def g_objective(g, s, t, ctx: BlockContext, ops: ShiftOperators, lambda_g: float) -> float:
    D = build_D(s, ctx, ops)
    return float(-t + lambda_g * np.real(np.vdot(g, D @ g)))


def leakage_energy(g, ctx: BlockContext, ops: ShiftOperators) -> float:
    """Neighbour contribution to ``g^H D g`` (constant in the current waveform)."""
    _, pre, post = _masks(ops)
    a = ops.apply_all(ctx.s_pre)[pre] @ np.conj(g)
    b = ops.apply_all(ctx.s_post)[post] @ np.conj(g)
    return float(np.sum(np.abs(a) ** 2) + np.sum(np.abs(b) ** 2))


def scaled_filter(g_unit, s, ops: ShiftOperators, eta: float) -> np.ndarray:
    """Distortionless filter scaled so the peak constraint is active."""
    r = ops.zero_lag @ s
    return eta * np.real(np.vdot(r, r)) * g_unit


def normalized_filter(g, s, ops: ShiftOperators) -> np.ndarray:
    """``g`` divided by its zero-lag response, so that ``g^H r = 1``."""
    r = ops.zero_lag @ s
    return g / np.conj(np.vdot(g, r))


# -- initialization ---------------------------------------------------------

def project_annulus(s, lo: float, hi: float) -> np.ndarray:
    """Radial projection of each sample onto ``lo <= |s|^2 <= hi``."""
    mag = np.abs(s)
    target = np.clip(mag, np.sqrt(lo), np.sqrt(hi))
    phase = np.where(mag > 0, s / np.where(mag > 0, mag, 1.0), 1.0)
    return target * phase


def initial_waveform(ws: Workspace, rng, *, max_cycles: int = 2000, depth: float = 0.1) -> np.ndarray:
    """Feasible start: constant modulus with random phases, then alternating projections.

    The CI sets are targeted with a margin ``depth`` so that the final
    annulus projection keeps every CI constraint satisfied.
    """
    sc = ws.scenario
    lo, hi = sc.power_bounds
    s = np.sqrt(sc.p0 / sc.n_t) * np.exp(2j * np.pi * rng.uniform(size=sc.n_dim))
    deep = ws.ci.tightened(depth)
    H, hh = deep.H, np.sum(np.abs(deep.H) ** 2, axis=1)
    for _ in range(max_cycles):
        if np.min(ws.ci.margins(s)) >= 0:
            return s
        for l in range(H.shape[0]):
            w = H[l] @ s
            target = project_received(deep.regions[l], w, deep.symbols[l], deep.ci_scale, deep.tighten)
            s = s + (target - w) / hh[l] * H[l].conj()
        s = project_annulus(s, lo, hi)
    raise InitializationError(f"no CI-feasible waveform within the power annulus after {max_cycles} cycles")


def boundary_waveform(scenario: Scenario, rng) -> np.ndarray:
    """Constant-modulus random-phase waveform used for blocks outside the design."""
    return np.sqrt(scenario.p0 / scenario.n_t) * np.exp(2j * np.pi * rng.uniform(size=scenario.n_dim))


# -- AO ---------------------------------------------------------------------

@dataclass
class DesignResult:
    """Outcome of designing one block."""

    index: int
    scenario: Scenario
    s: np.ndarray
    t: float
    g: np.ndarray
    ctx: BlockContext
    s_init: np.ndarray
    g_init: np.ndarray
    g_obj_trace: list = field(default_factory=list)
    sca_traces: list = field(default_factory=list)
    adpm_iters: list = field(default_factory=list)
    adpm_residuals: list = field(default_factory=list)
    feasibility: dict = field(default_factory=dict)
    identity_errors: list = field(default_factory=list)
    sca_iterates: list = field(default_factory=list)
    lam_max: float = np.nan
    stop_reason: str = ""

    @property
    def ao_iterations(self) -> int:
        return len(self.g_obj_trace) - 1


def ao_solve(ws: Workspace, ctx: BlockContext, *, s0=None, rng=None, trace=None) -> DesignResult:
    """Alternate the closed-form filter step and the SCA waveform step.

    Raises
    ------
    InitializationError
        No feasible starting waveform could be constructed.
    SolverConsistencyError
        The AO objective increased or fell below its lower bound.
    """
    cfg, sc, ops = ws.cfg, ws.scenario, ws.problem.shifts
    if sc.eta <= 0:
        raise ConfigurationError("the filter step needs eta > 0")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    s = initial_waveform(ws, rng) if s0 is None else np.asarray(s0, dtype=complex).copy()
    t = ws.ratio(s)
    r = ops.zero_lag @ s
    g = sc.eta * r
    feas0 = ws.feasibility(s, t, g)
    if max(feas0.values()) > cfg.feas_tol:
        raise InitializationError(f"starting point is infeasible: {feas0}")
    lam = sc.lambda_g
    res = DesignResult(ctx.index, sc, s, t, g, ctx, s.copy(), g.copy(), lam_max=ws.lam_max)
    res.g_obj_trace.append(g_objective(g, s, t, ctx, ops, lam))

    for i in range(1, cfg.ao_max_iter + 1):
        D = build_D(s, ctx, ops)
        g_new = scaled_filter(update_filter(s, ctx, ops, cfg.filter_loading, D=D), s, ops, sc.eta)
        if np.real(np.vdot(g_new, D @ g_new)) <= np.real(np.vdot(g, D @ g)):
            g = g_new
        G_side = build_G_side(g, ops)
        side_eig = hermitian_eig(G_side, "G_side")
        sca = sca_solve(ws, g, side_eig, G_side, s, t, trace=trace)
        s, t = sca.s, sca.t
        value = g_objective(g, s, t, ctx, ops, lam)
        # quadratic-form identity linking the SCA objective and g_obj
        via_side = objective(s, t, G_side, lam) + lam * leakage_energy(g, ctx, ops)
        res.identity_errors.append(abs(via_side - value) / max(1.0, abs(value)))
        prev = res.g_obj_trace[-1]
        if value > prev + cfg.monotone_slack:
            raise SolverConsistencyError(f"AO objective increased: {prev:.12g} -> {value:.12g}")
        if value < -ws.lam_max - cfg.monotone_slack:
            raise SolverConsistencyError(f"AO objective {value} below -lambda_max {-ws.lam_max}")
        res.g_obj_trace.append(value)
        res.sca_traces.append(list(sca.f_trace))
        res.sca_iterates.append(list(sca.iterates))
        res.adpm_iters.append(list(sca.adpm_iters))
        res.adpm_residuals.append(list(sca.adpm_residuals))
        log.info("block %d AO %d: g_obj=%.10g t=%.6g sca_iters=%d", ctx.index, i, value, t, sca.j)
        if trace is not None:
            trace({"ao": i, "block": ctx.index, "g_obj": value, "t": t, "sca_iters": sca.j,
                   "sca_stop": sca.stop_reason})
        if i >= cfg.ao_min_iter and abs(prev - value) <= cfg.ao_tol:
            res.stop_reason = "converged"
            break
    else:
        res.stop_reason = "max-iter"
    res.s, res.t, res.g = s, t, g
    res.feasibility = ws.feasibility(s, t, g)
    return res


def refresh_filter(ws: Workspace, res: DesignResult, ctx: BlockContext) -> DesignResult:
    """Re-solve the filter step of a finished design against new neighbours."""
    ops = ws.problem.shifts
    D = build_D(res.s, ctx, ops)
    g = scaled_filter(update_filter(res.s, ctx, ops, ws.cfg.filter_loading, D=D), res.s, ops,
                      ws.scenario.eta)
    res.g, res.ctx = g, ctx
    res.feasibility = ws.feasibility(res.s, res.t, g)
    return res


# -- interleaved schedule ---------------------------------------------------

def block_scenarios(scenario: Scenario, num_blocks: int, seed: int = 0) -> list[Scenario]:
    """Block 1 keeps the scenario's symbols; later blocks draw fresh ones."""
    out = [scenario]
    for b in range(2, num_blocks + 1):
        rng = np.random.default_rng([seed, b])
        out.append(scenario.replace(symbols=draw_symbols(scenario.constellation, scenario.num_symbols, rng)))
    return out


@dataclass
class ScheduleResult:
    blocks: list
    boundary: tuple
    initial: list
    workspaces: list = field(default_factory=list)

    def neighbours(self, b: int) -> BlockContext:
        """Final neighbours of 1-based block ``b``."""
        return block_context(b, [r.s for r in self.blocks], self.boundary)

    def initial_neighbours(self, b: int) -> BlockContext:
        """Neighbours of block ``b`` before any design (matched-filter baseline)."""
        return block_context(b, self.initial, self.boundary)


def block_context(b: int, waves: list, boundary: tuple) -> BlockContext:
    """Context of 1-based block ``b`` in a row of ``waves`` framed by ``boundary``."""
    pre = boundary[0] if b == 1 else waves[b - 2]
    post = boundary[1] if b == len(waves) else waves[b]
    return BlockContext(pre, post, b)


def interleaved_schedule(scenario: Scenario, num_blocks: int, cfg: SolverConfig | None = None, *,
                         threads: int = 1, trace=None, refresh: bool = True) -> ScheduleResult:
    """Design ``num_blocks`` consecutive blocks in two interleaved passes.

    Pass 1 designs the odd blocks against initial neighbours; pass 2 designs
    the even blocks against the optimized odd blocks.  Blocks within a pass
    are independent and may run on ``threads`` workers.  When ``refresh``
    is set, every block's filter is finally re-solved against its actual
    neighbours (the waveforms are left untouched).
    """
    if num_blocks < 1:
        raise ConfigurationError("num_blocks must be >= 1")
    cfg = SolverConfig() if cfg is None else cfg
    scenarios = block_scenarios(scenario, num_blocks, cfg.seed)
    workspaces = [Workspace.build(sc, cfg) for sc in scenarios]
    rngs = [np.random.default_rng([cfg.seed, 1000 + b]) for b in range(num_blocks + 2)]
    boundary = (boundary_waveform(scenario, rngs[0]), boundary_waveform(scenario, rngs[-1]))
    initial = [initial_waveform(workspaces[b - 1], rngs[b]) for b in range(1, num_blocks + 1)]
    waves = list(initial)
    results: list = [None] * num_blocks

    def design(b):
        ctx = block_context(b, waves, boundary)
        return ao_solve(workspaces[b - 1], ctx, s0=initial[b - 1], trace=trace)

    for parity in (1, 0):
        todo = [b for b in range(1, num_blocks + 1) if b % 2 == parity]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(design, todo))
        else:
            done = [design(b) for b in todo]
        for b, r in zip(todo, done):
            results[b - 1] = r
        for b, r in zip(todo, done):
            waves[b - 1] = r.s
    if refresh:
        for b in range(1, num_blocks + 1):
            ctx = block_context(b, waves, boundary)
            if ctx.s_pre is not results[b - 1].ctx.s_pre or ctx.s_post is not results[b - 1].ctx.s_post:
                refresh_filter(workspaces[b - 1], results[b - 1], ctx)
    return ScheduleResult(results, boundary, initial, workspaces)
