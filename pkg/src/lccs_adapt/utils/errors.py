"""Exception hierarchy shared by every stage of the toolkit."""

from typing import Optional


class LCCSError(Exception):
    """Base exception; carries the pipeline stage that raised it, when known."""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class ContractError(LCCSError, ValueError):
    """An operation was called outside its preconditions (shapes, ranges)."""


class NumericDomainError(LCCSError, ArithmeticError):
    """A computation left the finite reals (zero divisor, NaN/Inf)."""


class DegenerateVarianceError(NumericDomainError):
    """Batch statistics were requested for a single rank-2 sample."""


class TapeError(LCCSError, RuntimeError):
    """backward() was called on a tape that has already been played."""


class CheckpointError(LCCSError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint declares a format version this build cannot read."""


class CheckpointShapeError(CheckpointError):
    """A stored array disagrees with its declared or expected shape."""


class MalformedCheckpointError(CheckpointError):
    """The checkpoint file is truncated or structurally invalid."""


class DatasetFormatError(LCCSError):
    """A dataset container is malformed or carries an unknown version."""


class ExperimentStageError(LCCSError):
    """A harness stage failed; wraps the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{type(cause).__name__}: {cause}", stage=stage)
        self.cause = cause
