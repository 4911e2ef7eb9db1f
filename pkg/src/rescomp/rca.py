"""Maximum-likelihood residual components.

Given a second-moment matrix of centered data and a positive-definite
covariance ``sigma`` that already explains part of the variance, the
maximum-likelihood low-rank residual term is obtained from the generalized
eigenvalue problem of the pair ``(second_moment, sigma)``: the retained
generalized eigenvectors are those whose eigenvalue exceeds one, and the
loadings are ``sigma @ S_q @ sqrt(D_q - I)``.

Two roles share the same algebra:

* ``dual``:   second moment ``Y Y.T / p`` over data points, solving for the
  latent coordinates ``X`` (n x q);
* ``primal``: second moment ``Y.T Y / n`` over features, solving for the
  loadings ``W`` (p x q).

``sigma = noise_var * I`` recovers the classical probabilistic-PCA solution,
provided here as ``ppca_fit``.  Data centering is the caller's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg
from .exceptions import InvalidInput, NotPositiveDefinite, RankUnavailable

ROLES = ("primal", "dual")

# Generalized eigenvalues within this distance of 1 are treated as exactly 1:
# they carry no residual variance and must not create spurious components.
RANK_TIE_TOL = 1e-8


@dataclass(frozen=True)
class RcaSolution:
    """Retained generalized eigenpairs and the resulting loadings.

    ``loadings`` is ``X`` in the dual role and ``W`` in the primal role;
    ``basis`` holds the retained generalized eigenvectors (columns of S) and
    ``retained_values`` their eigenvalues (all > 1, descending).  The free
    rotation of the maximum-likelihood solution is fixed to the identity.
    """

    loadings: np.ndarray
    retained_values: np.ndarray
    basis: np.ndarray
    role: str

    @property
    def rank(self) -> int:
        return int(self.loadings.shape[1])

    @property
    def dim(self) -> int:
        return int(self.loadings.shape[0])

    def truncated(self, rank: int) -> "RcaSolution":
        """Copy keeping only the leading ``rank`` components."""
        if rank > self.rank:
            raise RankUnavailable(f"cannot extend rank {self.rank} to {rank}")
        return RcaSolution(
            loadings=self.loadings[:, :rank],
            retained_values=self.retained_values[:rank],
            basis=self.basis[:, :rank],
            role=self.role,
        )


@dataclass(frozen=True)
class PpcaSolution:
    """Closed-form probabilistic-PCA fit (isotropic-noise special case)."""

    loadings: np.ndarray
    values: np.ndarray
    noise_var: float

    @property
    def rank(self) -> int:
        return int(self.loadings.shape[1])


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray


def select_rank(values, tie_tol: float = RANK_TIE_TOL) -> int:
    """Number of generalized eigenvalues strictly above ``1 + tie_tol``.

    ``values`` must be sorted descending.
    """
    values = np.asarray(values, dtype=float)
    return int(np.sum(values > 1.0 + tie_tol))


def _check_role(role: str) -> str:
    if role not in ROLES:
        raise InvalidInput(f"role must be one of {ROLES}, got {role!r}")
    return role


def rca_fit(second_moment, sigma, rank: int | None = None, role: str = "dual") -> RcaSolution:
    """Maximum-likelihood residual fit for the pair ``(second_moment, sigma)``.

    Retains the generalized eigenvectors with eigenvalue above one, or
    exactly ``rank`` leading components when ``rank`` is given (raising
    ``RankUnavailable`` if that many are not supported by the data).
    """
    _check_role(role)
    second_moment = linalg.check_symmetric(second_moment, name="second_moment")
    sigma = linalg.check_symmetric(sigma, name="sigma")
    if second_moment.shape != sigma.shape:
        raise InvalidInput(
            f"dimension mismatch: {second_moment.shape} vs {sigma.shape}"
        )
    gep = linalg.gep_sym(second_moment, sigma)
    available = select_rank(gep.values)
    if rank is None:
        q = available
    else:
        if rank < 0:
            raise InvalidInput(f"rank must be nonnegative, got {rank}")
        if rank > available:
            raise RankUnavailable(
                f"requested rank {rank} but only {available} generalized "
                "eigenvalues exceed 1"
            )
        q = rank
    basis = gep.vectors[:, :q]
    values = gep.values[:q]
    loadings = sigma @ basis @ np.diag(np.sqrt(values - 1.0))
    return RcaSolution(loadings=loadings, retained_values=values, basis=basis, role=role)


def ppca_fit(second_moment, noise_var: float, rank: int | None = None) -> PpcaSolution:
    """Closed-form probabilistic PCA: ``W = U_q sqrt(L_q - noise_var)``.

    Retains the eigenvectors of the sample second moment whose eigenvalue
    exceeds ``noise_var`` (or exactly ``rank`` of them when given).
    """
    if noise_var <= 0:
        raise InvalidInput(f"noise_var must be positive, got {noise_var}")
    decomp = linalg.sym_eig(second_moment)
    available = int(np.sum(decomp.values > noise_var * (1.0 + RANK_TIE_TOL)))
    if rank is None:
        q = available
    elif rank > available:
        raise RankUnavailable(
            f"requested rank {rank} but only {available} eigenvalues exceed "
            f"the noise variance {noise_var:.3e}"
        )
    else:
        q = rank
    values = decomp.values[:q]
    loadings = decomp.vectors[:, :q] * np.sqrt(values - noise_var)
    return PpcaSolution(loadings=loadings, values=values, noise_var=float(noise_var))


def rca_loglik(data, loadings, sigma, role: str) -> float:
    """Exact Gaussian log-likelihood under ``K = loadings @ loadings.T + sigma``.

    Sums the log-density over the independent axis: over feature columns in
    the dual role (``K`` is n x n), over data rows in the primal role
    (``K`` is p x p).
    """
    _check_role(role)
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise InvalidInput(f"data must be 2-d, got shape {data.shape}")
    loadings = np.asarray(loadings, dtype=float)
    sigma = linalg.check_symmetric(sigma, name="sigma")
    n, p = data.shape
    dim = n if role == "dual" else p
    count = p if role == "dual" else n
    if loadings.shape[0] != dim or sigma.shape[0] != dim:
        raise InvalidInput(
            f"{role} role needs dimension {dim}, got loadings {loadings.shape} "
            f"and sigma {sigma.shape}"
        )
    cov = loadings @ loadings.T + sigma
    lower = linalg.cholesky(cov)  # raises NotPositiveDefinite
    logdet = linalg.chol_logdet(lower)
    stacked = data if role == "dual" else data.T
    half = solve_triangular(lower, stacked, lower=True, check_finite=False)
    quad = float(np.sum(half * half))
    return -0.5 * (count * logdet + quad + n * p * np.log(2.0 * np.pi))


def posterior_moments(y, loadings, sigma) -> GaussianPosterior:
    """Latent posterior for one centered observation under the primal model.

    mean = C q, covariance C = (W.T sigma^{-1} W + I)^{-1} with
    q = W.T sigma^{-1} y.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    loadings = np.asarray(loadings, dtype=float)
    sigma = linalg.check_symmetric(sigma, name="sigma")
    p, q = loadings.shape
    if y.shape[0] != p or sigma.shape[0] != p:
        raise InvalidInput(
            f"dimension mismatch: y {y.shape}, loadings {loadings.shape}, "
            f"sigma {sigma.shape}"
        )
    lower = linalg.cholesky(sigma)
    sig_inv_w = linalg.chol_solve(lower, loadings)
    prec = loadings.T @ sig_inv_w + np.eye(q)
    cov = linalg.spd_inverse(prec)
    mean = cov @ (sig_inv_w.T @ y)
    return GaussianPosterior(mean=mean, covariance=cov)


def rca_posterior(y, solution, sigma) -> GaussianPosterior:
    """Latent posterior for a primal-role solution (dual posterior is not
    defined by the model and not supported)."""
    if isinstance(solution, RcaSolution):
        if solution.role != "primal":
            raise InvalidInput("posterior is only defined for primal-role solutions")
        loadings = solution.loadings
    else:
        loadings = solution
    return posterior_moments(y, loadings, sigma)


def loglik_gradient_fd(data, loadings, sigma, role: str, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``rca_loglik`` in the loadings.

    Diagnostic used to certify stationarity of fitted solutions.
    """
    loadings = np.asarray(loadings, dtype=float)
    grad = np.zeros_like(loadings)
    for i in range(loadings.shape[0]):
        for j in range(loadings.shape[1]):
            bumped = loadings.copy()
            bumped[i, j] += step
            up = rca_loglik(data, bumped, sigma, role)
            bumped[i, j] -= 2.0 * step
            down = rca_loglik(data, bumped, sigma, role)
            grad[i, j] = (up - down) / (2.0 * step)
    return grad
