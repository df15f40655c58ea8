"""Custom exceptions for the outflux toolkit.

Every exception carries the process exit code the CLI reports for it:
2 for configuration problems, 3 for numeric failures and 4 for violated
geometric or analytic hypotheses.
"""

from typing import Any, Optional


class OutfluxError(Exception):
    """Base exception for all outflux errors."""

    exit_code: int = 1


class ConfigError(OutfluxError):
    """Raised when a configuration document fails validation."""

    exit_code = 2

    def __init__(self, message: str, pointer: str = "") -> None:
        super().__init__(f"{message} (at {pointer or '/'})")
        self.pointer = pointer


class NumericError(OutfluxError):
    """Raised when a numerical procedure fails."""

    exit_code = 3


class QuadratureError(NumericError):
    """Raised when adaptive quadrature does not converge."""

    pass


class SingularSystemError(NumericError):
    """Raised when a discrete linear system cannot be solved."""

    pass


class NonConvergenceError(NumericError):
    """Raised when the homotopy/Picard iteration fails persistently."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StorageError(NumericError):
    """Raised when run artifacts cannot be written or read."""

    pass


class ArtifactNotFoundError(StorageError):
    """Raised when a requested stage artifact does not exist."""

    pass


class GeometryError(OutfluxError):
    """Raised when a geometric assertion fails."""

    exit_code = 4


class ProfileInvalidError(GeometryError):
    """Raised when the outlet profile is nonpositive or not Lipschitz."""

    pass


class MeshResolutionError(GeometryError):
    """Raised when the mesh size cannot resolve the domain."""

    pass


class DomainError(GeometryError):
    """Raised when a point lies outside the region an operation accepts."""

    pass


class HypothesisError(OutfluxError):
    """Raised when an analytic hypothesis or precondition is violated."""

    exit_code = 4


class PreconditionError(HypothesisError):
    """Raised when an operation's precondition does not hold."""

    pass


class CompatibilityError(HypothesisError):
    """Raised when a divergence datum does not have zero mean."""

    pass
