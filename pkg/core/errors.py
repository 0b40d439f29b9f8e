"""Exception hierarchy shared by every package."""

from typing import Optional


class RemqstError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RemqstError, ValueError):
    """A quantum object violates its invariants."""


class DimensionMismatchError(ValidationError):
    """Operands have incompatible Hilbert-space dimensions."""


class ChannelError(ValidationError):
    """A channel or noise parameter is unphysical."""


class CalibrationError(ValidationError):
    """Calibration states or detector data cannot support a reconstruction."""


class ConfigError(RemqstError, ValueError):
    """Invalid configuration or command-line overrides."""


class SchemaError(ConfigError):
    """An input file does not match its JSON schema."""

    def __init__(self, message: str, field: Optional[str] = None, source: Optional[str] = None):
        self.field = field
        self.source = source
        location = ""
        if source:
            location += f"{source}: "
        if field:
            location += f"field '{field}': "
        super().__init__(f"{location}{message}")


class ConvergenceError(RemqstError, RuntimeError):
    """An iterative estimator did not converge."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class DegenerateBankError(ConvergenceError):
    """The particle bank collapsed onto fewer than two distinct particles."""


class StageError(RemqstError):
    """A pipeline stage failed; wraps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
