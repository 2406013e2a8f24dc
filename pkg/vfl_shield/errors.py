"""Exception hierarchy shared by every vfl_shield subpackage.

Each error also derives from the closest builtin so callers that only know
about ``ValueError`` or ``RuntimeError`` keep working.
"""

from typing import Optional


class VflShieldError(Exception):
    """Base class for all library errors."""


class ShapeError(VflShieldError, ValueError):
    """Input arrays have incompatible dimensions."""


class ContractError(VflShieldError, ValueError):
    """A documented precondition of an operation was violated."""


class NumericalError(VflShieldError, FloatingPointError):
    """A public operation produced NaN or Inf."""


class OracleError(NumericalError):
    """The finite-difference oracle evaluated a non-finite function value."""


class DivergedError(NumericalError):
    """An iterative optimizer produced a non-finite objective."""

    def __init__(self, message: str, iteration: int):
        """Initialize the error.

        Args:
            message: Human-readable description.
            iteration: Index of the iteration at which divergence was seen.
        """
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class AccessViolation(VflShieldError, PermissionError):
    """Somebody tried to read an encrypted payload without the right."""


class ThreatModelViolation(AccessViolation):
    """The TTP was asked to decrypt sample-level (non-aggregated) data."""


class AmbiguousGradientError(VflShieldError, ValueError):
    """A per-sample gradient does not have exactly one negative component."""


class TrainingFailureError(VflShieldError, RuntimeError):
    """A model failed its acceptance gates after every allowed attempt."""


class FormatError(VflShieldError, ValueError):
    """A binary file could not be parsed."""

    def __init__(self, message: str, offset: Optional[int] = None):
        """Initialize the error.

        Args:
            message: Human-readable description.
            offset: Byte offset at which parsing failed, if known.
        """
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
        self.offset = offset


class ConfigError(VflShieldError, ValueError):
    """An experiment configuration failed schema validation."""

    def __init__(self, message: str, path: Optional[str] = None):
        """Initialize the error.

        Args:
            message: Human-readable description.
            path: Dotted path of the offending key.
        """
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class ExperimentError(VflShieldError, RuntimeError):
    """Wraps a module error raised while running a configured experiment."""
