"""
Test cases for dense symmetric linear algebra.

Test Categories:
- Cholesky: hand factorizations and pivot errors
- Symmetric Eigen: Jacobi results against hand values and numpy
- Generalized Eigen: residuals, B-orthonormality and invariances
"""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from deep_sfa.core import ConvergenceError, DegenerateInputError, NotPositiveDefiniteError, ShapeMismatchError
from deep_sfa.geneig import GenEigResult, cho_solve, cholesky, gen_eig, sym_eig, symmetrize
from tests.conftest import assert_allclose, assert_b_orthonormal, random_spd_pair


class TestCholesky:
    """Test the Cholesky factorization."""

    def test_identity(self):
        """The identity factors into itself."""
        assert np.array_equal(cholesky(np.eye(4)), np.eye(4))

    def test_hand_factorization(self):
        """[[4,2],[2,3]] factors as [[2,0],[1,sqrt 2]]."""
        L = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], 1e-15, "L")

    def test_not_positive_definite(self):
        """[[1,2],[2,1]] fails at the second pivot."""
        with pytest.raises(NotPositiveDefiniteError) as excinfo:
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert excinfo.value.pivot == 2

    def test_zero_first_pivot(self):
        """A zero leading entry fails at pivot 1."""
        with pytest.raises(NotPositiveDefiniteError) as excinfo:
            cholesky(np.zeros((3, 3)))
        assert excinfo.value.pivot == 1

    def test_reconstruction(self, spd_pair):
        """L is lower triangular with positive diagonal and L L^T = B."""
        _, b = spd_pair
        L = cholesky(b)
        assert np.array_equal(L, np.tril(L))
        assert (np.diag(L) > 0).all()
        assert_allclose(L @ L.T, b, 1e-10 * np.abs(b).max(), "L L^T")

    def test_cho_solve(self, spd_pair, rng: np.random.Generator):
        """Solving through the factor matches a direct solve."""
        _, b = spd_pair
        m = rng.normal(size=(5, 3))
        assert_allclose(cho_solve(cholesky(b), m), np.linalg.solve(b, m), 1e-10, "Z")

    def test_asymmetric_rejected(self):
        """Clearly asymmetric input is not factored."""
        with pytest.raises(DegenerateInputError, match="not symmetric"):
            cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_non_square_rejected(self):
        """Input must be square."""
        with pytest.raises(ShapeMismatchError):
            cholesky(np.zeros((2, 3)))


class TestSymEig:
    """Test the cyclic Jacobi eigensolver."""

    def test_diagonal(self):
        """diag(3,1) yields [1,3] with axis eigenvectors."""
        values, vectors = sym_eig(np.diag([3.0, 1.0]))
        assert values.tolist() == [1.0, 3.0]
        assert np.array_equal(vectors, [[0.0, 1.0], [1.0, 0.0]])

    def test_hand_values(self):
        """[[0,1],[1,0]] has eigenvalues -1 and 1."""
        values, vectors = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert_allclose(values, [-1.0, 1.0], 1e-14, "eigenvalues")
        assert_allclose(np.abs(vectors), np.full((2, 2), np.sqrt(0.5)), 1e-14, "eigenvectors")

    @pytest.mark.parametrize("d", [1, 3, 6, 12])
    def test_residual_and_orthonormality(self, d, rng: np.random.Generator):
        """C V = V diag(lam) and V^T V = I to 1e-10."""
        m = rng.normal(size=(d, d))
        c = (m + m.T) / 2.0
        values, vectors = sym_eig(c)
        scale = max(1.0, float(np.abs(c).max()))
        assert_allclose(c @ vectors, vectors * values, 1e-10 * scale, "C V - V diag(lam)")
        assert_allclose(vectors.T @ vectors, np.eye(d), 1e-10, "V^T V")
        assert (np.diff(values) >= 0).all()

    def test_matches_numpy(self, rng: np.random.Generator):
        """Eigenvalues agree with LAPACK."""
        m = rng.normal(size=(8, 8))
        c = m @ m.T
        values, _ = sym_eig(c)
        assert_allclose(values, np.linalg.eigvalsh(c), 1e-10 * np.abs(c).max(), "eigenvalues")

    def test_sign_convention(self, rng: np.random.Generator):
        """Each eigenvector's largest-magnitude entry is positive."""
        m = rng.normal(size=(5, 5))
        _, vectors = sym_eig(m + m.T)
        leading = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(5)]
        assert (leading > 0).all()

    def test_zero_matrix(self):
        """The zero matrix is already diagonal."""
        values, vectors = sym_eig(np.zeros((3, 3)))
        assert values.tolist() == [0.0, 0.0, 0.0]
        assert np.array_equal(vectors, np.eye(3))

    def test_sweep_budget(self, rng: np.random.Generator):
        """Running out of sweeps reports the remaining off-diagonal norm."""
        m = rng.normal(size=(6, 6))
        with pytest.raises(ConvergenceError) as excinfo:
            sym_eig(m + m.T, max_sweeps=0)
        assert excinfo.value.off_norm > 0

    def test_symmetrize_averages_round_off(self):
        """Tiny asymmetry is averaged away."""
        c = np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])
        assert np.array_equal(symmetrize(c), symmetrize(c).T)


class TestGenEig:
    """Test the generalized eigenproblem A W = B W diag(lam)."""

    def test_identity_metric(self, rng: np.random.Generator):
        """With B = I the problem reduces to sym_eig."""
        m = rng.normal(size=(4, 4))
        a = (m + m.T) / 2.0
        result = gen_eig(a, np.eye(4))
        values, vectors = sym_eig(a)
        assert_allclose(result.eigenvalues, values, 1e-12, "eigenvalues")
        assert_allclose(result.eigenvectors, vectors, 1e-10, "eigenvectors")

    def test_equal_matrices(self, spd_pair):
        """A = B gives all eigenvalues 1."""
        _, b = spd_pair
        assert_allclose(gen_eig(b, b).eigenvalues, np.ones(5), 1e-10, "eigenvalues")

    @pytest.mark.parametrize("d", [2, 5, 9, 16])
    def test_residual_and_b_orthonormality(self, d, rng: np.random.Generator):
        """A W = B W diag(lam) and W^T B W = I to 1e-8 on random SPD pairs."""
        a, b = random_spd_pair(rng, d)
        result = gen_eig(a, b)
        w = result.eigenvectors
        scale = max(1.0, float(np.abs(a).max()))
        assert_allclose(a @ w, b @ w * result.eigenvalues, 1e-8 * scale, "A W - B W diag(lam)")
        assert_b_orthonormal(w, b)
        assert result.dim == d

    def test_psd_numerator_non_negative(self, rng: np.random.Generator):
        """A positive semi-definite A has eigenvalues >= -1e-10."""
        g = rng.normal(size=(6, 3))
        _, b = random_spd_pair(rng, 6)
        assert (gen_eig(g @ g.T, b).eigenvalues >= -1e-10).all()

    def test_trace_identity(self, spd_pair):
        """The sum of squared eigenvalues equals tr[(B^-1 A)^2]."""
        a, b = spd_pair
        product = np.linalg.solve(b, a)
        expected = float(np.trace(product @ product))
        assert float(np.sum(gen_eig(a, b).eigenvalues ** 2)) == pytest.approx(expected, abs=1e-8)

    def test_congruence_invariance(self, rng: np.random.Generator):
        """Eigenvalues do not change under A -> M^T A M, B -> M^T B M."""
        for _ in range(5):
            a, b = random_spd_pair(rng, 3)
            m = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
            original = gen_eig(a, b).eigenvalues
            transformed = gen_eig(m.T @ a @ m, m.T @ b @ m).eigenvalues
            assert_allclose(transformed, original, 1e-8, "eigenvalues")

    def test_not_positive_definite_metric(self):
        """A singular B propagates the Cholesky error."""
        with pytest.raises(NotPositiveDefiniteError):
            gen_eig(np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_shape_mismatch(self):
        """A and B must share their shape."""
        with pytest.raises(ShapeMismatchError):
            gen_eig(np.eye(2), np.eye(3))

    def test_result_validation(self):
        """Results reject unsorted eigenvalues and are read-only."""
        with pytest.raises(ValidationError, match="ascending"):
            GenEigResult(eigenvalues=[2.0, 1.0], eigenvectors=np.eye(2))
        result = GenEigResult(eigenvalues=[1.0, 2.0], eigenvectors=np.eye(2))
        with pytest.raises(ValueError):
            result.eigenvectors[0, 0] = 5.0
