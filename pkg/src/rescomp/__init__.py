"""Residual component analysis.

Maximum-likelihood low-rank components residual to an arbitrary
positive-definite covariance, solved through a symmetric-definite
generalized eigenvalue problem, plus the EM hybrid that jointly estimates
a low-rank factor and a sparse inverse covariance.
"""

from .datagen import SimInstance, SimSpec, gen_confounded, gen_sparse_precision
from .em import (
    EmRcaConfig,
    EmRcaState,
    PosteriorMoments,
    e_step,
    em_rca_fit,
    lower_bound,
    m_step,
    penalized_marginal_loglik,
    rca_step,
)
from .estimators import (
    IsotropicResidualPCA,
    LowRankSparseDecomposition,
    ResidualComponents,
    SparseInverseCovariance,
)
from .exceptions import (
    FileIOError,
    InvalidInput,
    NoConvergence,
    NotPositiveDefinite,
    ParseError,
    RankUnavailable,
    RescompError,
)
from .glasso import (
    GlassoConfig,
    SparsePrecision,
    glasso_fit,
    glasso_objective,
    kkt_residual,
)
from .kernels import KernelSpec, TimeGrid, mean_column_variance, rbf_gram, residual_scores
from .linalg import EigDecomp, GepDecomp, cholesky, gep_sym, sym_eig, whitening_transform
from .metrics import Curve, EdgeScoreSet, edges_from_precision, precision_recall, roc
from .rca import (
    GaussianPosterior,
    PpcaSolution,
    RcaSolution,
    ppca_fit,
    rca_fit,
    rca_loglik,
    rca_posterior,
    select_rank,
)
from .stability import EdgePath, LambdaGrid, lambda_grid, stability_select, threshold_edges

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "EdgePath",
    "EdgeScoreSet",
    "EigDecomp",
    "EmRcaConfig",
    "EmRcaState",
    "FileIOError",
    "GaussianPosterior",
    "GepDecomp",
    "GlassoConfig",
    "InvalidInput",
    "IsotropicResidualPCA",
    "KernelSpec",
    "LambdaGrid",
    "LowRankSparseDecomposition",
    "NoConvergence",
    "NotPositiveDefinite",
    "ParseError",
    "PosteriorMoments",
    "PpcaSolution",
    "RankUnavailable",
    "RcaSolution",
    "RescompError",
    "ResidualComponents",
    "SimInstance",
    "SimSpec",
    "SparseInverseCovariance",
    "SparsePrecision",
    "TimeGrid",
    "cholesky",
    "e_step",
    "edges_from_precision",
    "em_rca_fit",
    "gen_confounded",
    "gen_sparse_precision",
    "gep_sym",
    "glasso_fit",
    "glasso_objective",
    "kkt_residual",
    "lambda_grid",
    "lower_bound",
    "m_step",
    "mean_column_variance",
    "penalized_marginal_loglik",
    "ppca_fit",
    "precision_recall",
    "rbf_gram",
    "rca_fit",
    "rca_loglik",
    "rca_posterior",
    "rca_step",
    "residual_scores",
    "roc",
    "select_rank",
    "stability_select",
    "sym_eig",
    "threshold_edges",
    "whitening_transform",
]
