"""Dense symmetric linear algebra for the slow-feature problems.

The symmetric-definite generalized eigenproblem ``A W = B W diag(lam)`` is
reduced to a standard one through the Cholesky factor of ``B`` and solved with
cyclic Jacobi rotations. Eigenvalues come back ascending, so the slowest
features lead.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core import ConvergenceError, DegenerateInputError, FloatArray, NotPositiveDefiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

MAX_SWEEPS = 50
SYMMETRY_TOLERANCE = 1e-8


class GenEigResult(BaseModel):
    """Generalized eigenpairs; column j of ``eigenvectors`` pairs with ``eigenvalues[j]``."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: NDArray[np.float64] = Field(..., description="Ascending eigenvalues")
    eigenvectors: NDArray[np.float64] = Field(..., description="B-orthonormal eigenvectors as columns")

    @field_validator("eigenvalues", "eigenvectors", mode="before")
    @classmethod
    def _read_only(cls, value: Any) -> NDArray[np.float64]:
        array = np.array(value, dtype=np.float64)
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def _check_pairs(self) -> GenEigResult:
        d = self.eigenvalues.size
        if self.eigenvectors.shape != (d, d):
            raise ValueError(f"eigenvectors shape {self.eigenvectors.shape} does not match {d} eigenvalues")
        if d > 1 and (np.diff(self.eigenvalues) < 0).any():
            raise ValueError("eigenvalues must be sorted ascending")
        return self

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)


def _square(matrix: Any, name: str) -> FloatArray:
    array = np.asarray(matrix, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] == 0:
        raise ShapeMismatchError(f"{name} must be a non-empty square matrix, got shape {array.shape}")
    if not np.isfinite(array).all():
        raise DegenerateInputError(f"{name} has non-finite entries")
    return array


def symmetrize(matrix: Any, name: str = "matrix") -> FloatArray:
    """Return ``(M + M.T) / 2`` after checking ``M`` is symmetric up to round-off."""
    array = _square(matrix, name)
    asymmetry = float(np.max(np.abs(array - array.T)))
    if asymmetry > SYMMETRY_TOLERANCE * max(1.0, float(np.max(np.abs(array)))):
        raise DegenerateInputError(f"{name} is not symmetric (max asymmetry {asymmetry:.3e})")
    return (array + array.T) / 2.0


def cholesky(B: Any) -> FloatArray:
    """Lower-triangular ``L`` with ``L @ L.T == B``.

    Raises:
        NotPositiveDefiniteError: On the first non-positive pivot (1-based index)
    """
    matrix = symmetrize(B, "B")
    d = matrix.shape[0]
    L = np.zeros_like(matrix)
    for j in range(d):
        pivot = matrix[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > 0.0:
            raise NotPositiveDefiniteError(j + 1, float(pivot))
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (matrix[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def cho_solve(L: FloatArray, M: FloatArray) -> FloatArray:
    """Solve ``(L @ L.T) Z = M`` given the Cholesky factor ``L``."""
    return np.linalg.solve(L.T, np.linalg.solve(L, M))


def _off_norm(matrix: FloatArray) -> float:
    return float(np.linalg.norm(matrix - np.diag(np.diag(matrix))))


def _fix_signs(vectors: FloatArray) -> FloatArray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    leading = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    return vectors * np.where(leading < 0, -1.0, 1.0)


def sym_eig(C: Any, *, max_sweeps: int = MAX_SWEEPS) -> tuple[FloatArray, FloatArray]:
    """Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Returns:
        Ascending eigenvalues and orthonormal eigenvectors (columns)

    Raises:
        ConvergenceError: If off-diagonal mass remains after ``max_sweeps`` sweeps
    """
    a = symmetrize(C, "C")
    d = a.shape[0]
    v = np.eye(d)
    tolerance = 4.0 * d * np.finfo(np.float64).eps * float(np.linalg.norm(a))

    off = _off_norm(a)
    sweep = 0
    while off > tolerance:
        if sweep == max_sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", off)
        sweep += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rotation = np.array([[c, s], [-s, c]])
                pq = [p, q]
                a[:, pq] = a[:, pq] @ rotation
                a[pq, :] = rotation.T @ a[pq, :]
                a[p, q] = a[q, p] = 0.0
                v[:, pq] = v[:, pq] @ rotation
        off = _off_norm(a)
        logger.debug("Jacobi sweep %d: off-diagonal norm %.3e", sweep, off)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], _fix_signs(v[:, order])


def gen_eig(A: Any, B: Any) -> GenEigResult:
    """Solve ``A W = B W diag(lam)`` for symmetric ``A`` and SPD ``B``.

    The eigenvectors are B-orthonormal: ``W.T @ B @ W == I``.

    Raises:
        ShapeMismatchError: If A and B differ in shape
        NotPositiveDefiniteError: If B is not positive definite
    """
    a = symmetrize(A, "A")
    b = _square(B, "B")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"A {a.shape} and B {b.shape} differ in shape")
    L = cholesky(b)
    reduced = np.linalg.solve(L, np.linalg.solve(L, a).T)
    reduced = (reduced + reduced.T) / 2.0
    eigenvalues, vectors = sym_eig(reduced)
    W = _fix_signs(np.linalg.solve(L.T, vectors))
    return GenEigResult(eigenvalues=eigenvalues, eigenvectors=W)
