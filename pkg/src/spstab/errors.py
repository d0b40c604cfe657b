"""Exception types shared across the package.

Domain violations (bad shapes, negative occupations, parameters outside
their documented ranges) raise plain ValueError subclasses so callers can
treat them like ordinary argument errors.  Numerical failures get their
own hierarchy so the CLI can map them to a distinct exit code.
"""

from __future__ import annotations

__all__ = [
    "ConfigError",
    "NumericalError",
    "QuadratureError",
    "TruncationError",
    "NonConvergenceError",
    "InfeasibleChargeError",
    "DegenerateSpectrumError",
    "AuditError",
]


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance.

    Carries the achieved tolerance estimate in ``achieved``.
    """

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(message)
        self.achieved = achieved


class TruncationError(NumericalError):
    """Neglected spectral tail exceeds the configured fraction of a trace."""

    def __init__(self, message: str, tail: float = float("nan"),
                 partial: float = float("nan")):
        super().__init__(message)
        self.tail = tail
        self.partial = partial


class NonConvergenceError(NumericalError):
    """An iterative solver ran out of iterations or stalled.

    ``history`` holds per-iteration diagnostics for post-mortem use.
    """

    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = history if history is not None else []


class InfeasibleChargeError(NumericalError):
    """No chemical-potential shift can reach the requested total charge."""


class DegenerateSpectrumError(NumericalError):
    """Adjacent eigenvalues too close to order modes reliably."""


class AuditError(RuntimeError):
    """A stability or invariant audit reported a violation."""
