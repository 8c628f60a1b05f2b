"""Deep SFA core module.

Shared array aliases, the exception hierarchy used by every stage of the
change-detection pipeline, and the structured error models returned by the
"safe" entry points.
"""

from __future__ import annotations

import traceback
from datetime import datetime
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

# Type aliases
FloatArray = NDArray[np.float64]
PixelMatrix = NDArray[np.float64]
BinaryMask = NDArray[np.bool_]


class ErrorDetail(BaseModel):
    """Detailed information about a failed operation."""
    model_config = ConfigDict(frozen=True)

    error_type: str = Field(..., description="Type of error that occurred")
    message: str = Field(..., description="Human-readable error message")
    stage: str | None = Field(None, description="Pipeline stage that failed")
    context: dict[str, Any] | None = Field(None, description="Values useful for debugging")
    stack_trace: list[str] | None = Field(None, description="Full stack trace of the error")
    timestamp: datetime = Field(default_factory=datetime.now, description="When the error occurred")


class PipelineError(BaseModel):
    """Structured error response for pipeline failures."""
    model_config = ConfigDict(frozen=True)

    success: bool = Field(False, description="Whether the operation was successful")
    error: ErrorDetail = Field(..., description="Detailed error information")
    debug_info: dict[str, Any] | None = Field(None, description="Additional debug information")


class ChangeDetectionError(Exception):
    """Base class for all errors raised by deep_sfa."""

    def __init__(
        self,
        message: str,
        *,
        stage: str | None = None,
        context: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.context = context or {}

    def to_detail(self) -> ErrorDetail:
        """Convert into a serializable error detail."""
        trace = traceback.format_exception(type(self), self, self.__traceback__)
        return ErrorDetail(
            error_type=type(self).__name__,
            message=self.message,
            stage=self.stage,
            context={k: _jsonable(v) for k, v in self.context.items()} or None,
            stack_trace="".join(trace).splitlines(),
        )


class RasterFormatError(ChangeDetectionError):
    """Raster header/payload is missing, inconsistent or holds non-finite values."""


class ShapeMismatchError(ChangeDetectionError):
    """Two arrays that must agree in shape do not."""


class DegenerateInputError(ChangeDetectionError):
    """Input is too small or too constant for the requested statistic."""


class NotPositiveDefiniteError(ChangeDetectionError):
    """Cholesky factorization met a non-positive pivot."""

    def __init__(self, pivot: int, value: float) -> None:
        super().__init__(
            f"matrix is not positive definite (pivot {pivot} = {value:.6g})",
            context={"pivot": pivot, "value": value},
        )
        self.pivot = pivot


class ConvergenceError(ChangeDetectionError):
    """An iterative solver ran out of its iteration budget."""

    def __init__(self, message: str, off_norm: float) -> None:
        super().__init__(f"{message} (off-diagonal norm {off_norm:.3e})", context={"off_norm": off_norm})
        self.off_norm = off_norm


class TrainingDivergenceError(ChangeDetectionError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float) -> None:
        super().__init__(
            f"training diverged at epoch {epoch} (loss={loss}); lower the learning rate",
            context={"epoch": epoch, "loss": loss},
        )
        self.epoch = epoch


class UndefinedMetricError(ChangeDetectionError):
    """A metric has a zero denominator for the given confusion counts."""

    def __init__(self, metric: str, reason: str) -> None:
        super().__init__(f"metric '{metric}' is undefined: {reason}", context={"metric": metric})
        self.metric = metric


class SamplingError(ChangeDetectionError):
    """Training samples cannot be drawn as requested."""


class SynthesisError(ChangeDetectionError):
    """Synthetic scene generation failed."""


class StageError(ChangeDetectionError):
    """Wraps any failure with the name of the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        context = dict(getattr(cause, "context", {}) or {})
        context["cause_type"] = type(cause).__name__
        super().__init__(f"stage '{stage}' failed: {cause}", stage=stage, context=context)


def as_pixel_matrix(data: Any, name: str = "matrix") -> PixelMatrix:
    """Coerce to a 2-D float64 matrix, rejecting empty or non-finite input."""
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2 or 0 in matrix.shape:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        bad = np.argwhere(~np.isfinite(matrix))[0]
        raise DegenerateInputError(f"{name} has a non-finite entry at {tuple(int(i) for i in bad)}")
    return matrix


def require_same_shape(a: FloatArray, b: FloatArray, what: str = "X and Y") -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def error_from_exception(exc: BaseException, *, debug_info: dict[str, Any] | None = None) -> PipelineError:
    """Build a PipelineError for any exception, structured or not."""
    if isinstance(exc, ChangeDetectionError):
        detail = exc.to_detail()
    else:
        detail = ErrorDetail(
            error_type=type(exc).__name__,
            message=str(exc),
            stack_trace=traceback.format_exception(type(exc), exc, exc.__traceback__),
        )
    return PipelineError(error=detail, debug_info=debug_info)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value
