"""
Exception hierarchy shared by the services, the CLI and the HTTP layer.

The CLI maps these to exit codes through ``exit_code_for``; the API maps them
to HTTP status codes in ``app.api.routes``.
"""
from typing import Any, Optional


class ToolkitError(Exception):
    """Root of every error raised on purpose by the toolkit."""
    exit_code = 1


class InvalidInputError(ToolkitError, ValueError):
    """Argument outside the documented domain of an operation."""
    exit_code = 2


class CertificateInconsistencyError(ToolkitError):
    """A class-K function or certificate family fails its invariants."""

    def __init__(self, message: str, r: Optional[float] = None):
        super().__init__(message)
        self.r = r


class LipschitzValidityError(ToolkitError):
    """The Lipschitz chain for psi^-1 has a non-positive denominator."""

    def __init__(self, message: str, inequality: str, lhs: float):
        super().__init__(message)
        self.inequality = inequality
        self.lhs = lhs


class DesignError(ToolkitError):
    """A requested trigger design is not expressible with the given inputs."""


class BracketError(ToolkitError):
    """Crossing localization was called without a sign change (simulator bug)."""


class ScenarioConfigError(ToolkitError):
    """Scenario file could not be parsed or validated."""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field:
            where.append(f"field '{self.field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        return f"{prefix}{self.args[0]}"


class SimulationAbort(ToolkitError):
    """Base for runs stopped by a guard; carries the partial record."""
    exit_code = 3

    def __init__(self, message: str, t: float, record: Any = None):
        super().__init__(message)
        self.t = t
        self.record = record


class DivergenceError(SimulationAbort):
    """State became non-finite or left the divergence bound."""


class ZenoSuspicionError(SimulationAbort):
    """Events accumulate faster than the configured rate."""

    def __init__(self, message: str, t: float, event_count: int, record: Any = None):
        super().__init__(message, t, record)
        self.event_count = event_count


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ToolkitError):
        return exc.exit_code
    return 1
