"""Joint estimation of a low-rank factor and a sparse inverse covariance.

Fits the generative model

    y | x, z ~ N(W x + z, noise_var * I),   x ~ N(0, I),   z ~ N(0, P^{-1})

with a Laplace prior on the sparse precision ``P``, by alternating

* an E-step computing the Gaussian posterior moments of ``z`` given ``y``,
* an M-step updating ``P`` by penalized maximum likelihood (graphical
  lasso on the posterior-averaged second moment), and
* a residual-component step updating ``W`` from the generalized eigenvalue
  problem of the sample covariance against ``P^{-1} + noise_var * I``.

``noise_var`` is fixed at its initialization (half the average sample
variance), which also caps the number of latent components, and the latent
count is re-selected each iteration by the eigenvalue-above-one rule.

Penalty convention: ``lam`` is the per-sample graphical-lasso penalty, i.e.
the Laplace prior exponent is ``-(n/2) * lam * ||P||_1,off``.  With that
scaling the M-step exactly maximizes the variational lower bound over
``P``, so an E+M pair can never decrease the bound.  Progress of the full
three-step loop is tracked by the exact penalized marginal log-likelihood,
which the bound attains right after every E-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg
from .exceptions import InvalidInput
from .glasso import GlassoConfig, SparsePrecision, glasso_fit, _l1_offdiag
from .rca import rca_fit

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PosteriorMoments:
    """Shared posterior covariance, per-point means, and the averaged
    second moment ``cov_z + means.T @ means / n`` of the sparse factor."""

    cov_z: np.ndarray
    means: np.ndarray
    second_moment_avg: np.ndarray


@dataclass
class EmRcaConfig:
    tol: float = 1e-6
    max_iter: int = 200
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    # Relative objective drop that gets flagged in ``EmRcaState.decreases``.
    decrease_tol: float = 1e-6


@dataclass
class EmRcaState:
    """Fit state: loadings, sparse precision, fixed noise variance, penalty,
    latest objective value and the objective trace (``trace[0]`` is the
    initialization objective, then one entry per iteration)."""

    loadings_w: np.ndarray
    precision: SparsePrecision
    noise_var: float
    lam: float
    bound: float
    iteration: int
    converged: bool = False
    trace: list = field(default_factory=list)
    decreases: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return int(self.loadings_w.shape[1])


def _gaussian_inverse(loadings_w: np.ndarray, noise_var: float) -> np.ndarray:
    """Inverse of ``W W.T + noise_var * I`` via the Woodbury identity."""
    p, q = loadings_w.shape
    if noise_var <= 0:
        raise InvalidInput(f"noise_var must be positive, got {noise_var}")
    if q == 0:
        return np.eye(p) / noise_var
    core = noise_var * np.eye(q) + loadings_w.T @ loadings_w
    lower = linalg.cholesky(core)
    half = solve_triangular(lower, loadings_w.T, lower=True, check_finite=False)
    inv = (np.eye(p) - half.T @ half) / noise_var
    return (inv + inv.T) / 2.0


def e_step(data, loadings_w, noise_var: float, precision) -> PosteriorMoments:
    """Posterior moments of the sparse factor given centered data."""
    data = np.asarray(data, dtype=float)
    loadings_w = np.asarray(loadings_w, dtype=float)
    entries = precision.entries if isinstance(precision, SparsePrecision) else precision
    entries = linalg.check_symmetric(entries, name="precision")
    n, p = data.shape
    if loadings_w.shape[0] != p or entries.shape[0] != p:
        raise InvalidInput(
            f"dimension mismatch: data {data.shape}, loadings {loadings_w.shape}, "
            f"precision {entries.shape}"
        )
    g_inv = _gaussian_inverse(loadings_w, noise_var)
    cov_z = linalg.spd_inverse(g_inv + entries)
    means = data @ g_inv @ cov_z
    second = cov_z + means.T @ means / n
    return PosteriorMoments(cov_z=cov_z, means=means,
                            second_moment_avg=(second + second.T) / 2.0)


def m_step(moments: PosteriorMoments, lam: float,
           config: GlassoConfig | None = None,
           init: SparsePrecision | None = None) -> SparsePrecision:
    """Penalized maximum-likelihood precision update."""
    return glasso_fit(moments.second_moment_avg, lam, config=config, init=init)


def rca_step(data, precision, noise_var: float, rank: int | None = None,
             max_rank: int | None = None) -> np.ndarray:
    """Loadings update: residual components of the sample covariance
    against ``P^{-1} + noise_var * I`` (primal role).

    ``rank`` forces an exact component count; ``max_rank`` caps the
    eigenvalue-above-one selection instead.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    entries = precision.entries if isinstance(precision, SparsePrecision) else precision
    sigma = linalg.spd_inverse(entries) + noise_var * np.eye(entries.shape[0])
    solution = rca_fit(data.T @ data / n, sigma, rank=rank, role="primal")
    if max_rank is not None and solution.rank > max_rank:
        solution = solution.truncated(max_rank)
    return solution.loadings


def penalized_marginal_loglik(data, loadings_w, precision, noise_var: float,
                              lam: float) -> float:
    """Exact log p(Y, P): Gaussian marginal (z integrated out analytically)
    plus the Laplace prior term ``-(n/2) * lam * ||P||_1,off``."""
    data = np.asarray(data, dtype=float)
    loadings_w = np.asarray(loadings_w, dtype=float)
    entries = precision.entries if isinstance(precision, SparsePrecision) else precision
    n, p = data.shape
    cov = loadings_w @ loadings_w.T + linalg.spd_inverse(entries) + noise_var * np.eye(p)
    lower = linalg.cholesky(cov)
    half = solve_triangular(lower, data.T, lower=True, check_finite=False)
    loglik = -0.5 * (n * linalg.chol_logdet(lower) + float(np.sum(half * half))
                     + n * p * LOG_2PI)
    return loglik - 0.5 * n * lam * _l1_offdiag(entries)


def lower_bound(data, state: EmRcaState, moments: PosteriorMoments) -> float:
    """Variational lower bound on the penalized marginal log-likelihood.

    Evaluates E_q[log p(Y|Z)] + E_q[log p(Z|P)] + log p(P) + H[q] for the
    Gaussian q given by ``moments``.  Equals ``penalized_marginal_loglik``
    exactly when ``moments`` comes from a fresh E-step at ``state``.
    """
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    entries = state.precision.entries if isinstance(state.precision, SparsePrecision) \
        else state.precision
    g_inv = _gaussian_inverse(state.loadings_w, state.noise_var)
    # log |W W.T + noise_var I| through the same Woodbury factorization.
    g_logdet = -linalg.chol_logdet(linalg.cholesky(g_inv))
    resid = data - moments.means
    cov_q = moments.cov_z
    e_obs = -0.5 * (n * (p * LOG_2PI + g_logdet)
                    + float(np.sum((resid @ g_inv) * resid))
                    + n * float(np.sum(g_inv * cov_q)))
    prec_logdet = linalg.chol_logdet(linalg.cholesky(entries))
    e_prior = 0.5 * n * prec_logdet - 0.5 * n * p * LOG_2PI \
        - 0.5 * n * float(np.sum(entries * moments.second_moment_avg))
    log_p_prec = -0.5 * n * state.lam * _l1_offdiag(entries)
    entropy = 0.5 * n * (p * (1.0 + LOG_2PI)
                         + linalg.chol_logdet(linalg.cholesky(cov_q)))
    return e_obs + e_prior + log_p_prec + entropy


def em_rca_fit(data, lam: float, config: EmRcaConfig | None = None) -> EmRcaState:
    """Run the full E / M / residual-component loop to convergence.

    Initialization: ``noise_var = tr(C_y) / (2 p)``, loadings from the
    closed-form isotropic fit over eigenvalues above ``noise_var`` and
    ``P = I``.  Stops when the relative change of the penalized marginal
    log-likelihood drops below ``config.tol``; on iteration exhaustion the
    last state is returned with ``converged=False``.
    """
    config = config or EmRcaConfig()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 2:
        raise InvalidInput(
            f"data must be n x p with n >= 1 and p >= 2, got shape {data.shape}"
        )
    if not np.all(np.isfinite(data)):
        raise InvalidInput("data contains non-finite entries")
    n, p = data.shape
    sample_cov = data.T @ data / n
    noise_var = float(np.trace(sample_cov)) / (2.0 * p)
    decomp = linalg.sym_eig(sample_cov)
    q0 = int(np.sum(decomp.values > noise_var))
    loadings = decomp.vectors[:, :q0] * np.sqrt(decomp.values[:q0] - noise_var)
    precision = SparsePrecision(entries=np.eye(p), support=frozenset(),
                                covariance=np.eye(p))

    objective = penalized_marginal_loglik(data, loadings, precision, noise_var, lam)
    trace = [objective]
    decreases = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        moments = e_step(data, loadings, noise_var, precision)
        precision = m_step(moments, lam, config=config.glasso, init=precision)
        loadings = rca_step(data, precision, noise_var, max_rank=q0)
        previous = objective
        objective = penalized_marginal_loglik(data, loadings, precision, noise_var, lam)
        trace.append(objective)
        scale = max(abs(previous), 1e-300)
        if objective < previous - config.decrease_tol * scale:
            decreases.append(iteration)
        if abs(objective - previous) < config.tol * scale:
            converged = True
            break
    return EmRcaState(
        loadings_w=loadings,
        precision=precision,
        noise_var=noise_var,
        lam=lam,
        bound=objective,
        iteration=iteration,
        converged=converged,
        trace=trace,
        decreases=decreases,
    )
