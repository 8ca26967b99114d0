"""Exception hierarchy shared by the solver stack and the CLI."""


class IsacDesignError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(IsacDesignError, ValueError):
    """A scenario or run configuration violates its documented schema."""


class DomainError(IsacDesignError, ValueError):
    """An argument lies outside the domain of an operation."""


class DivergenceError(IsacDesignError, ArithmeticError):
    """The monotone root finder could not bracket a sign change."""


class PreconditionError(IsacDesignError, ValueError):
    """A caller invoked an operation without meeting its precondition."""


class SurrogateInfeasibleError(IsacDesignError):
    """A linearized power halfspace excludes the whole magnitude disk."""


class InitializationError(IsacDesignError):
    """No feasible starting waveform could be constructed."""


class DegenerateWaveformError(IsacDesignError):
    """The waveform produces no zero-lag return, so no filter exists."""


class SolverConsistencyError(IsacDesignError, AssertionError):
    """A monotonicity or feasibility property the algorithm guarantees failed.

    Raised only when an internal invariant is violated beyond its
    tolerance, which points at an implementation bug rather than at the
    input data.
    """
