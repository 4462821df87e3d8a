"""Exception hierarchy shared by the genfric library and CLI."""


class GenfricError(Exception):
    """Base exception for all genfric errors."""


class ConfigError(GenfricError):
    """Raised when a run configuration cannot be parsed or validated.

    Attributes:
        line: 1-based line number of the offending entry, when known
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(GenfricError, ValueError):
    """Raised when a state or momentum does not match the system size."""


class DegenerateStateError(GenfricError, ValueError):
    """Raised when a gradient is requested at the origin, where none exists."""


class SearchSpaceTooLargeError(GenfricError):
    """Raised when the resonance lattice search would exceed its size cap."""


class DualSolverError(GenfricError):
    """Raised when the dual-norm solver cannot produce a usable solution.

    Attributes:
        residual: Fixed-point residual of the best iterate
        iterations: Iterations spent before giving up
    """

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IntegrationError(GenfricError):
    """Raised when the adaptive integrator cannot continue (step underflow)."""


class TrajectoryFormatError(GenfricError):
    """Raised when a trajectory CSV is empty or malformed."""
