"""Tests for the dense symmetric linear algebra layer."""

import numpy as np
import pytest

from rescomp import linalg
from rescomp.exceptions import InvalidInput, NotPositiveDefinite

from oracles import charpoly_eigenvalues, random_spd


class TestSymEig:
    def test_identity(self):
        decomp = linalg.sym_eig(np.eye(3))
        np.testing.assert_allclose(decomp.values, np.ones(3))
        recon = decomp.vectors @ np.diag(decomp.values) @ decomp.vectors.T
        np.testing.assert_allclose(recon, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        decomp = linalg.sym_eig(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(decomp.values, [3.0, 1.0])
        np.testing.assert_allclose(np.abs(decomp.vectors), np.eye(2), atol=1e-12)

    def test_seeded_reconstruction_and_charpoly_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((6, 6))
        a = (a + a.T) / 2.0
        decomp = linalg.sym_eig(a)
        recon = decomp.vectors @ np.diag(decomp.values) @ decomp.vectors.T
        assert np.max(np.abs(recon - a)) < 1e-10
        roots = charpoly_eigenvalues(a)
        assert roots.shape == (6,)
        # oracle only locates well-separated roots; this seed has them
        assert np.min(np.abs(np.diff(roots))) > 1e-2
        np.testing.assert_allclose(decomp.values, roots, atol=1e-8)

    def test_orthonormal_and_descending(self):
        rng = np.random.default_rng(11)
        a = random_spd(rng, 8)
        decomp = linalg.sym_eig(a)
        gram = decomp.vectors.T @ decomp.vectors
        assert np.linalg.norm(gram - np.eye(8)) < 1e-10
        assert np.all(np.diff(decomp.values) <= 1e-12)

    def test_sign_convention(self):
        rng = np.random.default_rng(12)
        decomp = linalg.sym_eig(random_spd(rng, 5))
        peaks = np.argmax(np.abs(decomp.vectors), axis=0)
        assert np.all(decomp.vectors[peaks, np.arange(5)] > 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_trace_and_determinant_identities(self, seed):
        rng = np.random.default_rng(seed)
        a = random_spd(rng, 6)
        decomp = linalg.sym_eig(a)
        assert abs(np.sum(decomp.values) - np.trace(a)) < 1e-8 * abs(np.trace(a))
        det_chol = np.exp(linalg.chol_logdet(linalg.cholesky(a)))
        prod = float(np.prod(decomp.values))
        assert abs(prod - det_chol) < 1e-6 * abs(det_chol)

    def test_rejects_nonfinite(self):
        a = np.eye(3)
        a[0, 1] = a[1, 0] = np.nan
        with pytest.raises(InvalidInput):
            linalg.sym_eig(a)

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInput):
            linalg.sym_eig(np.array([[1.0, 2.0], [0.5, 1.0]]))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        a = random_spd(rng, 7)
        first = linalg.sym_eig(a)
        second = linalg.sym_eig(a.copy())
        assert np.array_equal(first.vectors, second.vectors)
        assert np.array_equal(first.values, second.values)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_allclose(linalg.cholesky(np.eye(4)), np.eye(4))

    def test_hand_computed_2x2(self):
        lower = linalg.cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        np.testing.assert_allclose(lower, expected, atol=1e-14)
        np.testing.assert_allclose(lower @ lower.T, [[4.0, 2.0], [2.0, 3.0]],
                                   atol=1e-14)

    def test_rank_deficient_raises(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    @pytest.mark.parametrize("seed", range(4))
    def test_factorization_residual(self, seed):
        rng = np.random.default_rng(seed)
        a = random_spd(rng, 9)
        lower = linalg.cholesky(a)
        scale = np.linalg.norm(a)
        assert np.linalg.norm(lower @ lower.T - a) < 1e-10 * scale
        assert np.all(np.triu(lower, k=1) == 0.0)

    def test_chol_solve(self):
        rng = np.random.default_rng(5)
        a = random_spd(rng, 6)
        b = rng.standard_normal((6, 2))
        x = linalg.chol_solve(linalg.cholesky(a), b)
        np.testing.assert_allclose(a @ x, b, atol=1e-10)


class TestWhitening:
    def test_scalar_case(self):
        np.testing.assert_allclose(linalg.whitening_transform(4.0 * np.eye(3)),
                                   0.5 * np.eye(3), atol=1e-12)

    def test_diagonal_case(self):
        white = linalg.whitening_transform(np.diag([1.0, 4.0, 9.0]))
        got = np.sort(np.max(np.abs(white), axis=1))
        np.testing.assert_allclose(got, [1.0 / 3.0, 0.5, 1.0], atol=1e-12)

    def test_seeded_whitened_product(self):
        rng = np.random.default_rng(21)
        sigma = random_spd(rng, 5)
        white = linalg.whitening_transform(sigma)
        np.testing.assert_allclose(white @ sigma @ white.T, np.eye(5), atol=1e-8)

    def test_round_trip(self):
        rng = np.random.default_rng(22)
        sigma = random_spd(rng, 6)
        white = linalg.whitening_transform(sigma)
        x = rng.standard_normal(6)
        back = np.linalg.inv(white) @ (white @ x)
        assert np.linalg.norm(back - x) < 1e-8 * np.linalg.norm(x)

    def test_near_singular_raises(self):
        sigma = np.diag([1.0, 1e-14])
        with pytest.raises(NotPositiveDefinite):
            linalg.whitening_transform(sigma)


class TestGepSym:
    def test_identity_metric_reduces_to_sym_eig(self):
        rng = np.random.default_rng(31)
        a = random_spd(rng, 5)
        gep = linalg.gep_sym(a, np.eye(5))
        plain = linalg.sym_eig(a)
        np.testing.assert_allclose(gep.values, plain.values, atol=1e-12)

    def test_proportional_pair(self):
        rng = np.random.default_rng(32)
        b = random_spd(rng, 4)
        gep = linalg.gep_sym(2.0 * b, b)
        np.testing.assert_allclose(gep.values, np.full(4, 2.0), atol=1e-10)

    def test_seeded_residual_and_b_orthogonality(self):
        rng = np.random.default_rng(33)
        x = rng.standard_normal((6, 4))
        a = x @ x.T  # PSD, rank 4
        b = random_spd(rng, 6)
        gep = linalg.gep_sym(a, b)
        assert linalg.gep_residual(a, b, gep) < 1e-8
        np.testing.assert_allclose(gep.vectors.T @ b @ gep.vectors, np.eye(6),
                                   atol=1e-8)

    @pytest.mark.parametrize("dim", range(2, 13))
    def test_residual_property_over_dims(self, dim):
        rng = np.random.default_rng(100 + dim)
        a = random_spd(rng, dim)
        b = random_spd(rng, dim)
        gep = linalg.gep_sym(a, b)
        assert linalg.gep_residual(a, b, gep) < 1e-8
        assert np.linalg.norm(gep.vectors.T @ b @ gep.vectors - np.eye(dim)) < 1e-8
        assert np.all(np.diff(gep.values) <= 1e-12)

    def test_non_pd_metric_raises(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.gep_sym(np.eye(3), np.diag([1.0, 1.0, 0.0]))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInput):
            linalg.gep_sym(np.eye(3), np.eye(4))
