"""Change intensity and thresholding.

The chi-square intensity of a difference matrix scales every band by its
variance and sums the squares; its survival function is also what turns
chi-square statistics into pixel weights for iterative SFA.
"""

from __future__ import annotations

import logging
import math
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import Criterion
from .core import BinaryMask, DegenerateInputError, FloatArray, ShapeMismatchError, as_pixel_matrix
from .evaluation import GroundTruth, MetricBundle, criterion_values, evaluate

logger = logging.getLogger(__name__)

OTSU_BINS = 256
_EPS = np.finfo(np.float64).eps
_FPMIN = np.finfo(np.float64).tiny / _EPS
_MAX_TERMS = 1000


class IntensityMap(BaseModel):
    """Per-pixel chi-square change intensity."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: NDArray[np.float64] = Field(..., description="Non-negative intensity per pixel")
    dof: int = Field(..., ge=1, description="Number of bands that entered the sum")

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value: Any) -> NDArray[np.float64]:
        values = np.array(value, dtype=np.float64).reshape(-1)
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("intensity values must be finite and non-negative")
        values.flags.writeable = False
        return values


def chi2_intensity(D: Any) -> IntensityMap:
    """Sum over bands of ``D**2 / var(band)``.

    Bands with zero variance are skipped and lower the degrees of freedom.

    Raises:
        DegenerateInputError: With fewer than two pixels or no usable band
    """
    diff = as_pixel_matrix(D, "D")
    if diff.shape[1] < 2:
        raise DegenerateInputError(f"chi-square intensity needs at least 2 pixels, got {diff.shape[1]}")
    variances = diff.var(axis=1)
    usable = variances > 0.0
    if not usable.any():
        raise DegenerateInputError("every band of the difference matrix has zero variance")
    if not usable.all():
        logger.debug("Skipping zero-variance difference bands %s", np.flatnonzero(~usable).tolist())
    values = np.sum(diff[usable] ** 2 / variances[usable, None], axis=0)
    return IntensityMap(values=values, dof=int(usable.sum()))


def _lower_series(a: float, z: FloatArray) -> FloatArray:
    """Regularized lower incomplete gamma P(a, z) by its power series."""
    term = np.full_like(z, 1.0 / a)
    total = term.copy()
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= z / ap
        total += term
        if (np.abs(term) < np.abs(total) * _EPS).all():
            break
    with np.errstate(divide="ignore"):
        return total * np.exp(-z + a * np.log(z) - math.lgamma(a))


def _upper_fraction(a: float, z: FloatArray) -> FloatArray:
    """Regularized upper incomplete gamma Q(a, z) by Lentz's continued fraction."""
    b = z + 1.0 - a
    c = np.full_like(z, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_TERMS + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if (np.abs(delta - 1.0) < _EPS).all():
            break
    return np.exp(-z + a * np.log(z) - math.lgamma(a)) * h


def chi2_survival(x: Any, dof: int) -> FloatArray:
    """Upper-tail probability ``P(chi2_dof > x)``, elementwise.

    Uses the series for ``x < dof + 2`` (``z < a + 1`` in gamma terms) and the
    continued fraction otherwise.
    """
    if dof < 1:
        raise ValueError(f"dof must be positive, got {dof}")
    values = np.asarray(x, dtype=np.float64)
    if (values < 0).any() or not np.isfinite(values).all():
        raise ValueError("chi-square statistics must be finite and non-negative")

    a = dof / 2.0
    z = values.reshape(-1) / 2.0
    survival = np.empty_like(z)
    series = z < a + 1.0
    if series.any():
        survival[series] = 1.0 - _lower_series(a, z[series])
    if (~series).any():
        survival[~series] = _upper_fraction(a, z[~series])
    return np.clip(survival, 0.0, 1.0).reshape(values.shape)


def otsu_threshold(values: Any, bins: int = OTSU_BINS) -> float:
    """Threshold maximizing between-class variance over a ``bins``-bin histogram.

    Returns the upper edge of the last bin assigned to the low class. Ties
    resolve to the lower threshold.

    Raises:
        DegenerateInputError: For fewer than two values or constant input
    """
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if data.size < 2 or data.min() == data.max():
        raise DegenerateInputError("Otsu needs at least two distinct values")

    counts, edges = np.histogram(data, bins=bins, range=(data.min(), data.max()))
    centers = (edges[:-1] + edges[1:]) / 2.0
    p = counts / data.size
    omega = np.cumsum(p)[:-1]
    mu = np.cumsum(p * centers)[:-1]
    mu_total = float(np.sum(p * centers))

    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between = np.where((omega > 0) & (omega < 1), between, -np.inf)
    k = int(np.argmax(between))
    return float(edges[k + 1])


def binarize(values: Any, threshold: float) -> BinaryMask:
    """Changed where the value is strictly above the threshold."""
    return np.asarray(values, dtype=np.float64).reshape(-1) > threshold


def best_threshold(
    values: Any, gt: GroundTruth, criterion: Criterion = Criterion.KAPPA
) -> tuple[float, MetricBundle]:
    """Exhaustive search over every distinct value as threshold.

    Returns the first (lowest) threshold reaching the maximum criterion and
    the metrics at that threshold.

    Raises:
        ShapeMismatchError: If values and ground truth differ in length
        DegenerateInputError: If ground truth lacks a sampled class
    """
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if data.size != gt.size:
        raise ShapeMismatchError(f"{data.size} values vs {gt.size} ground-truth labels")
    changed = np.sort(data[gt.changed])
    unchanged = np.sort(data[gt.unchanged])
    if changed.size == 0 or unchanged.size == 0:
        raise DegenerateInputError("best threshold needs sampled changed and unchanged pixels")

    candidates = np.unique(data)
    tp = changed.size - np.searchsorted(changed, candidates, side="right")
    fp = unchanged.size - np.searchsorted(unchanged, candidates, side="right")
    scores = criterion_values(criterion, tp, unchanged.size - fp, fp, changed.size - tp)
    threshold = float(candidates[int(np.argmax(scores))])

    _, bundle = evaluate(binarize(data, threshold), gt)
    logger.debug("Best %s threshold %.6g over %d candidates", criterion.value, threshold, candidates.size)
    return threshold, bundle
