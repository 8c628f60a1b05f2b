"""Baselines and pre-detection.

CVA magnitude and PCA difference intensity serve both as comparison methods
and, binarized with two-cluster k-means, as the coarse change map DSFA draws
its unchanged training pairs from.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import SamplingStrategy
from .core import (
    BinaryMask,
    DegenerateInputError,
    FloatArray,
    PixelMatrix,
    SamplingError,
    as_pixel_matrix,
    require_same_shape,
)
from .evaluation import GroundTruth
from .geneig import sym_eig

logger = logging.getLogger(__name__)


class KMeansFit(BaseModel):
    """Outcome of two-cluster Lloyd iterations on scalars."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    changed: NDArray[np.bool_] = Field(..., description="True where the value joined the high cluster")
    centroids: tuple[float, float] = Field(..., description="(low, high) cluster centroids")
    iterations: int = Field(..., ge=1, description="Lloyd iterations run")
    objective: list[float] = Field(..., description="Within-cluster sum of squares after each iteration")
    converged: bool = Field(True, description="Whether assignments stopped changing")
    threshold: float = Field(..., description="Largest value in the low cluster")


class SampleSet(BaseModel):
    """Training pairs drawn from the scene."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xs: NDArray[np.float64] = Field(..., description="First-date samples, bands x k")
    ys: NDArray[np.float64] = Field(..., description="Second-date samples, bands x k")
    indices: NDArray[np.int64] = Field(..., description="Pixel indices of the samples")
    strategy: SamplingStrategy = Field(..., description="Pool the samples were drawn from")

    @field_validator("indices", mode="before")
    @classmethod
    def _coerce_indices(cls, value: Any) -> NDArray[np.int64]:
        return np.asarray(value, dtype=np.int64).reshape(-1)

    @model_validator(mode="after")
    def _check_samples(self) -> SampleSet:
        k = self.indices.size
        if self.xs.shape != self.ys.shape or self.xs.shape[1] != k:
            raise ValueError(f"sample matrices {self.xs.shape}/{self.ys.shape} do not match {k} indices")
        if np.unique(self.indices).size != k:
            raise ValueError("sample indices must be unique")
        return self

    @property
    def count(self) -> int:
        return int(self.indices.size)


def cva_magnitude(X: Any, Y: Any) -> FloatArray:
    """Euclidean norm of each pixel's spectral difference."""
    x = as_pixel_matrix(X, "X")
    y = as_pixel_matrix(Y, "Y")
    require_same_shape(x, y)
    return np.linalg.norm(x - y, axis=0)


def lloyd_1d(values: Any, seed: int = 0, max_iter: int = 100) -> KMeansFit:
    """Two-cluster k-means on scalars, centroids starting at min and max.

    Exact distance ties are broken by a per-value coin drawn once from ``seed``.

    Raises:
        DegenerateInputError: For fewer than two values or constant input
    """
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if data.size < 2 or data.min() == data.max():
        raise DegenerateInputError("k-means needs at least two distinct values")

    coin = np.random.default_rng(seed).random(data.size) < 0.5
    centroids = np.array([data.min(), data.max()])

    def assign() -> NDArray[np.bool_]:
        near_low = np.abs(data - centroids[0])
        near_high = np.abs(data - centroids[1])
        return np.where(near_low == near_high, coin, near_high < near_low)

    high = assign()
    objective: list[float] = []
    converged = False
    while len(objective) < max_iter:
        for label, members in enumerate((data[~high], data[high])):
            if members.size:
                centroids[label] = members.mean()
        objective.append(float(np.sum((data - np.where(high, centroids[1], centroids[0])) ** 2)))
        updated = assign()
        if np.array_equal(updated, high):
            converged = True
            break
        high = updated
    if not converged:
        logger.warning("1-D k-means hit the iteration cap (%d)", max_iter)

    changed = high if centroids[1] >= centroids[0] else ~high
    low_values = data[~changed]
    return KMeansFit(
        changed=changed,
        centroids=(float(centroids.min()), float(centroids.max())),
        iterations=len(objective),
        objective=objective,
        converged=converged,
        threshold=float(low_values.max()) if low_values.size else float(data.min()),
    )


def kmeans_1d(values: Any, seed: int = 0) -> tuple[BinaryMask, FloatArray]:
    """Changed mask (high cluster) and the (low, high) centroids."""
    fit = lloyd_1d(values, seed)
    return fit.changed, np.array(fit.centroids)


def cva_predetect(X: Any, Y: Any, seed: int = 0) -> BinaryMask:
    """Coarse change mask from CVA magnitude split by 1-D k-means.

    A constant magnitude means nothing stands out, so every pixel is unchanged.
    """
    magnitude = cva_magnitude(X, Y)
    if magnitude.min() == magnitude.max():
        logger.warning("CVA magnitude is constant; pre-detection marks every pixel unchanged")
        return np.zeros(magnitude.size, dtype=bool)
    changed, centroids = kmeans_1d(magnitude, seed)
    logger.debug("CVA pre-detection: %d changed pixels, centroids %s", int(changed.sum()), centroids)
    return changed


def sample_pool(
    strategy: SamplingStrategy,
    n: int,
    unchanged_mask: BinaryMask | None = None,
    gt: GroundTruth | None = None,
) -> NDArray[np.int64]:
    """Pixel indices eligible for ``strategy``."""
    if strategy is SamplingStrategy.RANDOM:
        return np.arange(n, dtype=np.int64)
    if strategy is SamplingStrategy.CVA:
        if unchanged_mask is None:
            raise SamplingError("strategy 'cva' needs a pre-detected unchanged mask")
        mask = np.asarray(unchanged_mask, dtype=bool).reshape(-1)
    else:
        if gt is None:
            raise SamplingError(f"strategy '{strategy.value}' needs ground truth")
        mask = gt.unchanged if strategy is SamplingStrategy.GROUND_TRUTH else gt.changed
    if mask.size != n:
        raise SamplingError(f"pool mask covers {mask.size} pixels, scene has {n}")
    return np.flatnonzero(mask).astype(np.int64)


def select_samples(
    X: Any,
    Y: Any,
    unchanged_mask: BinaryMask | None,
    count: int,
    seed: int,
    strategy: SamplingStrategy = SamplingStrategy.CVA,
    gt: GroundTruth | None = None,
) -> SampleSet:
    """Draw ``count`` pixel pairs uniformly without replacement from the strategy's pool.

    Raises:
        SamplingError: If the pool is smaller than ``count`` or the strategy's
            labels are missing
    """
    x = as_pixel_matrix(X, "X")
    y = as_pixel_matrix(Y, "Y")
    require_same_shape(x, y)
    pool = sample_pool(strategy, x.shape[1], unchanged_mask, gt)
    if count < 1 or count > pool.size:
        raise SamplingError(
            f"cannot draw {count} samples from a '{strategy.value}' pool of {pool.size} pixels",
            context={"count": count, "pool": int(pool.size)},
        )
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(pool, size=count, replace=False))
    return SampleSet(xs=x[:, indices], ys=y[:, indices], indices=indices, strategy=strategy)


def pca_diff(X: Any, Y: Any, k: int | None = None) -> FloatArray:
    """Squared norm of the difference projected on its top-``k`` principal axes."""
    x = as_pixel_matrix(X, "X")
    y = as_pixel_matrix(Y, "Y")
    require_same_shape(x, y)
    m = x.shape[0]
    k = m if k is None else k
    if not 1 <= k <= m:
        raise ValueError(f"PCA components must be in [1, {m}], got {k}")

    diff: PixelMatrix = x - y
    centered = diff - diff.mean(axis=1, keepdims=True)
    _, axes = sym_eig(centered @ centered.T / diff.shape[1])
    projected = axes[:, m - k :].T @ diff
    return np.sum(projected**2, axis=0)
