"""Scikit-learn style estimators wrapping the core fitters.

These follow the fit/transform/get_params protocol so the solvers compose
with pipelines and model selection from the wider ecosystem.  The heavy
lifting stays in the functional modules; the estimators add input
validation, column centering, and fitted-attribute bookkeeping.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .em import EmRcaConfig, em_rca_fit
from .exceptions import InvalidInput
from .glasso import GlassoConfig, glasso_fit
from .rca import posterior_moments, ppca_fit, rca_fit


class ResidualComponents(TransformerMixin, BaseEstimator):
    """Low-rank components residual to a known covariance (primal role).

    Parameters
    ----------
    sigma : array-like (p, p) or None
        Covariance already explaining part of the variance.  ``None`` falls
        back to isotropic noise: ``noise_var * I`` if given, else the
        half-average-variance rule, recovering probabilistic PCA.
    rank : int or None
        Force an exact component count instead of the
        eigenvalue-above-one rule.
    noise_var : float or None
        Isotropic noise variance when ``sigma`` is None.
    center : bool
        Subtract column means before fitting (stored in ``mean_``).
    """

    def __init__(self, sigma=None, rank=None, noise_var=None, center=True):
        self.sigma = sigma
        self.rank = rank
        self.noise_var = noise_var
        self.center = center

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2, ensure_min_samples=1)
        n, p = X.shape
        self.mean_ = X.mean(axis=0) if self.center else np.zeros(p)
        centered = X - self.mean_
        second_moment = centered.T @ centered / n
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != (p, p):
                raise InvalidInput(f"sigma must be {p} x {p}, got {sigma.shape}")
        else:
            noise = self.noise_var
            if noise is None:
                noise = float(np.trace(second_moment)) / (2.0 * p)
            sigma = noise * np.eye(p)
        self.sigma_ = sigma
        solution = rca_fit(second_moment, sigma, rank=self.rank, role="primal")
        self.loadings_ = solution.loadings
        self.eigenvalues_ = solution.retained_values
        self.basis_ = solution.basis
        self.rank_ = solution.rank
        return self

    def transform(self, X):
        """Posterior means of the latent components, one row per sample."""
        check_is_fitted(self, "loadings_")
        X = check_array(X)
        centered = X - self.mean_
        if self.rank_ == 0:
            return np.zeros((X.shape[0], 0))
        return np.vstack([
            posterior_moments(row, self.loadings_, self.sigma_).mean
            for row in centered
        ])


class IsotropicResidualPCA(BaseEstimator):
    """Closed-form probabilistic PCA (the isotropic special case)."""

    def __init__(self, rank=None, noise_var=None, center=True):
        self.rank = rank
        self.noise_var = noise_var
        self.center = center

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2, ensure_min_samples=1)
        n, p = X.shape
        self.mean_ = X.mean(axis=0) if self.center else np.zeros(p)
        centered = X - self.mean_
        second_moment = centered.T @ centered / n
        noise = self.noise_var
        if noise is None:
            noise = float(np.trace(second_moment)) / (2.0 * p)
        solution = ppca_fit(second_moment, noise, rank=self.rank)
        self.loadings_ = solution.loadings
        self.eigenvalues_ = solution.values
        self.noise_var_ = solution.noise_var
        self.rank_ = solution.rank
        return self


class SparseInverseCovariance(BaseEstimator):
    """l1-penalized precision estimation behind the estimator protocol."""

    def __init__(self, lam=0.1, kkt_tol=1e-6, max_iter=500,
                 penalize_diagonal=False, center=True):
        self.lam = lam
        self.kkt_tol = kkt_tol
        self.max_iter = max_iter
        self.penalize_diagonal = penalize_diagonal
        self.center = center

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2, ensure_min_samples=2)
        n = X.shape[0]
        self.mean_ = X.mean(axis=0) if self.center else np.zeros(X.shape[1])
        centered = X - self.mean_
        config = GlassoConfig(kkt_tol=self.kkt_tol, max_iter=self.max_iter,
                              penalize_diagonal=self.penalize_diagonal)
        result = glasso_fit(centered.T @ centered / n, self.lam, config=config)
        self.precision_ = result.entries
        self.covariance_ = result.covariance
        self.support_ = result.support
        self.converged_ = result.converged
        self.n_iter_ = result.n_iter
        return self


class LowRankSparseDecomposition(BaseEstimator):
    """Joint low-rank plus sparse-inverse covariance fit (EM loop)."""

    def __init__(self, lam=0.1, tol=1e-6, max_iter=200, center=True):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.center = center

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2, ensure_min_samples=2)
        self.mean_ = X.mean(axis=0) if self.center else np.zeros(X.shape[1])
        centered = X - self.mean_
        config = EmRcaConfig(tol=self.tol, max_iter=self.max_iter)
        state = em_rca_fit(centered, self.lam, config=config)
        self.loadings_ = state.loadings_w
        self.precision_ = state.precision.entries
        self.support_ = state.precision.support
        self.noise_var_ = state.noise_var
        self.objective_trace_ = list(state.trace)
        self.converged_ = state.converged
        self.n_iter_ = state.iteration
        return self
