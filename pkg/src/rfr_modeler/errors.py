"""Exception hierarchy. Each error class carries the CLI exit code it maps to."""

from typing import Any, Optional


class RfrError(Exception):
    """Base class for all rfr_modeler errors."""

    exit_code = 1


class ValidationError(RfrError, ValueError):
    """Bad input or configuration, detected before or during compute."""

    exit_code = 2


class NumericalFailure(RfrError):
    """Blow-up, singular systems and saddle escapes."""

    exit_code = 3


class ArtifactError(RfrError):
    """Unreadable or incompatible artifact on disk."""

    exit_code = 4


# Validation errors

class ConfigError(ValidationError):
    pass


class UnknownSystem(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class InvalidTau(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


class DegenerateSeries(ValidationError):
    pass


class InsufficientLength(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class NotEnoughSamples(ValidationError):
    pass


class TooManyCenters(ValidationError):
    """Center count exceeds the configured cap; δ_grid is too small."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"center count {count} exceeds cap {cap}; increase delta_grid")
        self.count = count
        self.cap = cap


# Numerical failures

class NonFiniteState(NumericalFailure):
    """Integration produced NaN/Inf.

    Attributes:
        step: Index of the first non-finite step
        partial: Trajectory recorded up to (excluding) the failing step
    """

    def __init__(self, message: str, step: int = -1, partial: Optional[Any] = None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class SingularSystem(NumericalFailure):
    pass


class SaddleEscape(NumericalFailure):
    """Stagger-and-step could not keep the trajectory valid; `run` holds the partial result."""

    def __init__(self, message: str, run: Optional[Any] = None):
        super().__init__(message)
        self.run = run


# Artifact errors

class CorruptFile(ArtifactError):
    pass


class FormatVersionMismatch(ArtifactError):
    def __init__(self, found: str, expected: str):
        super().__init__(f"model format version {found!r} is not supported (expected {expected!r})")
        self.found = found
        self.expected = expected


class StageFailed(RfrError):
    """A pipeline stage raised; wraps the cause with the stage name and partial manifest."""

    def __init__(self, stage: str, cause: BaseException, manifest: Optional[Any] = None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest
        self.exit_code = getattr(cause, "exit_code", 1)
