"""Joint radar/communication waveform and receive-filter design.

The package designs a multi-antenna transmit block ``s`` and a mismatched
receive filter ``g`` so that the transmit beampattern concentrates energy in
the mainlobe, the filter output has low range sidelobes (including leakage
from the neighbouring blocks of a continuous transmission), every sample
respects a power envelope, and each user receives its symbol inside the
constructive-interference region of the constellation.

Typical use::

    from isacdesign import desk_scenario, interleaved_schedule
    sched = interleaved_schedule(desk_scenario(), num_blocks=3)
"""

__version__ = "0.1.0"

from .ao import BlockContext, DesignResult, ScheduleResult, ao_solve, interleaved_schedule
from .config import RunConfig, SolverConfig, load_config
from .errors import (
    ConfigurationError,
    DegenerateWaveformError,
    DivergenceError,
    DomainError,
    InitializationError,
    IsacDesignError,
    PreconditionError,
    SolverConsistencyError,
    SurrogateInfeasibleError,
)
from .evaluation import EvaluationReport, evaluate, imsr, imsr_grid, range_profile, simulate_ser
from .model import Constellation, Scenario, build_problem, desk_scenario
from .oracle import run_validation
from .sca import Workspace, sca_solve

__all__ = [
    "BlockContext", "ConfigurationError", "Constellation", "DegenerateWaveformError", "DesignResult",
    "DivergenceError", "DomainError", "EvaluationReport", "InitializationError", "IsacDesignError",
    "PreconditionError", "RunConfig", "Scenario", "ScheduleResult", "SolverConfig",
    "SolverConsistencyError", "SurrogateInfeasibleError", "Workspace", "ao_solve", "build_problem",
    "desk_scenario", "evaluate", "imsr", "imsr_grid", "interleaved_schedule", "load_config",
    "range_profile", "run_validation", "sca_solve", "simulate_ser",
]
