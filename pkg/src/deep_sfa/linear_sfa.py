"""Linear slow feature analysis for bi-temporal change detection.

``fit_sfa`` finds the projection whose bi-temporal difference varies least
(unsupervised SFA); ``fit_isfa`` re-fits it with pixel weights equal to the
chi-square probability of being unchanged until the weights settle.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core import (
    DegenerateInputError,
    FloatArray,
    NotPositiveDefiniteError,
    PixelMatrix,
    ShapeMismatchError,
    as_pixel_matrix,
    require_same_shape,
)
from .geneig import gen_eig
from .segment import chi2_survival

logger = logging.getLogger(__name__)

RIDGE_SCALE = 1e-10
MIN_WEIGHT = 1e-12


class SfaModel(BaseModel):
    """B-normalized SFA projection; column j of ``w_hat`` is the j-th slowest feature."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    w_hat: NDArray[np.float64] = Field(..., description="Projection vectors as columns")
    eigenvalues: NDArray[np.float64] = Field(..., description="Ascending generalized eigenvalues")

    @field_validator("w_hat", "eigenvalues", mode="before")
    @classmethod
    def _read_only(cls, value: Any) -> NDArray[np.float64]:
        array = np.array(value, dtype=np.float64)
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> SfaModel:
        m = self.eigenvalues.size
        if self.w_hat.shape != (m, m):
            raise ValueError(f"w_hat shape {self.w_hat.shape} does not match {m} eigenvalues")
        return self

    @property
    def bands(self) -> int:
        return int(self.eigenvalues.size)


def _pair(X: Any, Y: Any) -> tuple[PixelMatrix, PixelMatrix]:
    x = as_pixel_matrix(X, "X")
    y = as_pixel_matrix(Y, "Y")
    require_same_shape(x, y)
    return x, y


def _check_weights(weights: Any, n: int) -> FloatArray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != n:
        raise ShapeMismatchError(f"{w.size} weights for {n} pixels")
    if not np.isfinite(w).all() or (w < 0).any() or (w > 1).any():
        raise DegenerateInputError("pixel weights must lie in [0, 1]")
    if w.sum() <= 0.0:
        raise DegenerateInputError("pixel weights are all zero")
    return w


def sfa_matrices(X: Any, Y: Any, weights: Any = None) -> tuple[FloatArray, FloatArray]:
    """Weighted temporal-difference scatter A and mean self-scatter B.

    Without weights every pixel counts once, giving ``A = (X-Y)(X-Y)^T / n``
    and ``B = (XX^T + YY^T) / 2n``.
    """
    x, y = _pair(X, Y)
    w = np.ones(x.shape[1]) if weights is None else _check_weights(weights, x.shape[1])
    total = w.sum()
    diff = x - y
    A = (diff * w) @ diff.T / total
    B = ((x * w) @ x.T + (y * w) @ y.T) / (2.0 * total)
    return (A + A.T) / 2.0, (B + B.T) / 2.0


def fit_sfa(X: Any, Y: Any, weights: Any = None) -> SfaModel:
    """Solve the slow-feature problem and B-normalize its projection vectors.

    If B is numerically singular a ridge of ``1e-10 * trace(B) / m`` is added
    once before giving up.
    """
    A, B = sfa_matrices(X, Y, weights)
    m = A.shape[0]
    try:
        result = gen_eig(A, B)
    except NotPositiveDefiniteError as e:
        ridge = RIDGE_SCALE * float(np.trace(B)) / m
        logger.warning("B is not positive definite (pivot %d); adding ridge %.3e", e.pivot, ridge)
        B = B + ridge * np.eye(m)
        result = gen_eig(A, B)

    W = result.eigenvectors
    w_hat = W / np.sqrt(np.einsum("ij,ik,kj->j", W, B, W))
    return SfaModel(w_hat=w_hat, eigenvalues=result.eigenvalues)


def transform_diff(model: SfaModel, X: Any, Y: Any) -> PixelMatrix:
    """Difference of the projected dates, one row per slow feature."""
    x, y = _pair(X, Y)
    if x.shape[0] != model.bands:
        raise ShapeMismatchError(f"model has {model.bands} bands, images have {x.shape[0]}")
    return model.w_hat.T @ x - model.w_hat.T @ y


def weighted_chi2(D: Any, weights: Any) -> tuple[FloatArray, int]:
    """Chi-square statistic per pixel using weighted band variances.

    Bands with zero weighted variance contribute nothing. Returns the
    statistics and the number of contributing bands (at least 1).
    """
    diff = as_pixel_matrix(D, "D")
    w = _check_weights(weights, diff.shape[1])
    total = w.sum()
    mean = (diff * w).sum(axis=1, keepdims=True) / total
    variances = ((diff - mean) ** 2 * w).sum(axis=1) / total
    usable = variances > 0.0
    if not usable.any():
        return np.zeros(diff.shape[1]), diff.shape[0]
    stats = np.sum(diff[usable] ** 2 / variances[usable, None], axis=0)
    return stats, int(usable.sum())


def fit_isfa(
    X: Any, Y: Any, max_iter: int = 50, tol: float = 1e-6
) -> tuple[SfaModel, FloatArray, int]:
    """Iteratively reweighted SFA.

    Starting from the unweighted model, each iteration turns the current
    difference into chi-square statistics, sets every pixel's weight to the
    chi-square survival probability, and re-fits the weighted model. Stops once
    no weight moves by ``tol`` or more, or after ``max_iter`` iterations.

    Returns:
        Final model, final weights and the number of iterations run

    Raises:
        DegenerateInputError: If every weight collapses below 1e-12
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    x, y = _pair(X, Y)
    model = fit_sfa(x, y)
    weights = np.ones(x.shape[1])

    iteration = 0
    for iteration in range(1, max_iter + 1):
        stats, dof = weighted_chi2(transform_diff(model, x, y), weights)
        updated = chi2_survival(stats, dof)
        if (updated < MIN_WEIGHT).all():
            raise DegenerateInputError("all pixels classified changed; ISFA weights collapsed")
        model = fit_sfa(x, y, updated)
        delta = float(np.max(np.abs(updated - weights)))
        weights = updated
        logger.debug("ISFA iteration %d: max weight change %.3e, mean weight %.4f", iteration, delta, weights.mean())
        if delta < tol:
            break
    else:
        logger.info("ISFA stopped at the iteration cap (%d) before weights settled", max_iter)

    return model, weights, iteration
