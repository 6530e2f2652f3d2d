"""Exception types shared across the package."""


class LoopSoupError(Exception):
    """Base class for all package errors."""


class ConfigError(LoopSoupError, ValueError):
    """Invalid run configuration or invalid input parameters."""


class TruncationError(LoopSoupError):
    """A spectral or series truncation could not be certified to the requested tolerance."""


class SolverError(LoopSoupError):
    """An eigenvalue or root solver failed to converge."""


class DivergentSeriesError(LoopSoupError):
    """A thermodynamic series (critical density, pressure) diverges for this trap."""


class InsufficientSamplesError(LoopSoupError):
    """A statistical test was requested with too few samples."""
