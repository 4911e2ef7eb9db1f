"""Dense symmetric linear algebra.

Eigendecomposition, Cholesky factorization, whitening maps and the
symmetric-definite generalized eigenvalue problem (GEP) that the residual
component solver reduces to.  Matrices are plain ``numpy`` arrays; the
``check_symmetric`` validation helper enforces the symmetry contract at
every entry point and returns an explicitly symmetrized copy.

All operations are pure functions and deterministic for identical input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve_triangular
from scipy.linalg import cholesky as scipy_cholesky

from .exceptions import InvalidInput, NotPositiveDefinite

# Max relative asymmetry accepted before a matrix is rejected outright.
SYM_RTOL = 1e-12
# Relative pivot / eigenvalue cutoff below which a matrix counts as non-PD.
PD_RTOL = 1e-12


@dataclass(frozen=True)
class EigDecomp:
    """Eigendecomposition of a symmetric matrix.

    ``vectors`` has orthonormal columns, ``values`` is sorted descending and
    each column's largest-magnitude entry is positive.
    """

    vectors: np.ndarray
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GepDecomp:
    """Solution of the pencil ``A S = B S diag(values)``.

    Columns of ``vectors`` are the generalized eigenvectors, normalized so
    that ``S.T @ B @ S = I``; ``values`` is sorted descending.
    """

    vectors: np.ndarray
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def check_symmetric(a, rtol: float = SYM_RTOL, name: str = "matrix") -> np.ndarray:
    """Validate a square symmetric matrix and return a symmetrized copy.

    Asymmetry up to ``rtol`` (relative to the largest magnitude entry) is
    repaired as ``(A + A.T) / 2``; anything worse raises ``InvalidInput``,
    as do non-finite entries and non-square shapes.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    gap = np.max(np.abs(a - a.T)) if a.size else 0.0
    if gap > rtol * max(scale, 1e-300):
        raise InvalidInput(
            f"{name} is not symmetric (max asymmetry {gap:.3e} at scale {scale:.3e})"
        )
    return (a + a.T) / 2.0


def _fix_column_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (in place)."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return vectors


def sym_eig(a) -> EigDecomp:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = check_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = _fix_column_signs(vectors[:, order])
    return EigDecomp(vectors=vectors, values=values)


def cholesky(a) -> np.ndarray:
    """Lower-triangular Cholesky factor of a positive-definite matrix.

    A pivot at or below ``PD_RTOL * max(diag)`` raises ``NotPositiveDefinite``,
    so near-singular matrices are rejected rather than silently factorized.
    The pivots equal ``diag(L)**2``, so the tolerance is enforced on the
    LAPACK factor after the fact.
    """
    a = check_symmetric(a)
    p = a.shape[0]
    if p == 0:
        return np.zeros_like(a)
    tol = PD_RTOL * max(float(np.max(np.diagonal(a))), 0.0)
    try:
        lower = scipy_cholesky(a, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diagonal(lower) ** 2
    small = np.flatnonzero(pivots <= tol)
    if small.size:
        j = int(small[0])
        raise NotPositiveDefinite(
            f"pivot {pivots[j]:.3e} at index {j} (tolerance {tol:.3e})"
        )
    return lower


def chol_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L.T) x = b`` given the lower Cholesky factor ``L``."""
    y = solve_triangular(lower, b, lower=True, check_finite=False)
    return solve_triangular(lower.T, y, lower=False, check_finite=False)


def chol_logdet(lower: np.ndarray) -> float:
    """log-determinant of ``L L.T`` from its Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diagonal(lower))))


def spd_inverse(a) -> np.ndarray:
    """Inverse of a positive-definite matrix via Cholesky, symmetrized."""
    lower = cholesky(a)
    inv = chol_solve(lower, np.eye(lower.shape[0]))
    return (inv + inv.T) / 2.0


def whitening_transform(sigma) -> np.ndarray:
    """Linear map ``M`` with ``M @ sigma @ M.T = I`` (rows ordered by
    descending eigenvalue of ``sigma``)."""
    decomp = sym_eig(sigma)
    values = decomp.values
    if values[0] <= 0.0 or values[-1] <= PD_RTOL * values[0]:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {values[-1]:.3e} vs largest {values[0]:.3e}"
        )
    return (decomp.vectors / np.sqrt(values)).T


def gep_sym(a, b) -> GepDecomp:
    """Solve ``A S = B S D`` for symmetric ``A`` and positive-definite ``B``.

    Uses the whitening route: with ``M`` whitening ``B``, reduce to the
    ordinary symmetric problem on ``M A M.T`` and back-transform the
    eigenvectors as ``S = M.T @ V``, which yields ``S.T @ B @ S = I``.
    """
    a = check_symmetric(a, name="a")
    b = check_symmetric(b, name="b")
    if a.shape != b.shape:
        raise InvalidInput(f"dimension mismatch: {a.shape} vs {b.shape}")
    white = whitening_transform(b)
    reduced = white @ a @ white.T
    inner = sym_eig((reduced + reduced.T) / 2.0)
    vectors = white.T @ inner.vectors
    return GepDecomp(vectors=vectors, values=inner.values)


def gep_residual(a, b, decomp: GepDecomp) -> float:
    """Relative defining-equation residual ``|A S - B S D| / |A S|``.

    Accepts a truncated decomposition (only the retained columns); used as
    the correctness certificate for saved fits.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = decomp.vectors
    if s.shape[1] == 0:
        return 0.0
    lhs = a @ s
    rhs = b @ s @ np.diag(decomp.values)
    denom = np.linalg.norm(lhs)
    if denom == 0.0:
        return float(np.linalg.norm(rhs))
    return float(np.linalg.norm(lhs - rhs) / denom)
