"""Error types raised by the suite."""

from typing import Optional


class SuiteError(Exception):
    """Base class for every error the suite raises on purpose."""


class ConfigError(SuiteError, ValueError):
    """Invalid or inconsistent configuration value."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(SuiteError, ValueError):
    """Parameter outside the range the model is defined for."""


class TruncationError(SuiteError, ValueError):
    """Velocity cutoff too small for the requested moment order."""


class ShapeError(SuiteError, ValueError):
    """Array shape does not match the grid."""


class SolverError(SuiteError, RuntimeError):
    """Linear solve failed or left a large residual."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class ResolutionError(SuiteError, RuntimeError):
    """Discretization too coarse to resolve the requested quantity."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class NumericError(SuiteError, RuntimeError):
    """Non-finite values appeared in a computation."""


class AuditFailure(SuiteError, RuntimeError):
    """One or more audited inequalities were violated."""

    def __init__(self, failures: dict[str, float]):
        names = ", ".join(f"{name}={value:.3e}" for name, value in sorted(failures.items()))
        super().__init__(f"audit failed: {names}")
        self.failures = dict(failures)
