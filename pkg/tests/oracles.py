"""Independent reference computations used as test oracles.

Everything here deliberately avoids the package's own code paths: densities
go through scipy.stats, conditionals through generic block inversion with
``np.linalg.inv``, and eigenvalues through a determinant scan.
"""

import numpy as np
from scipy.stats import multivariate_normal


def charpoly_eigenvalues(a, scan_points=20001, bisections=200):
    """Eigenvalues as roots of det(A - x I), located by a determinant sign
    scan over the Gershgorin interval plus bisection.

    Assumes well-separated roots (seeded test matrices are checked for
    that); completely independent of any symmetric eigensolver.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    radius = np.sum(np.abs(a), axis=1) - np.abs(np.diag(a))
    lo = float(np.min(np.diag(a) - radius)) - 1.0
    hi = float(np.max(np.diag(a) + radius)) + 1.0
    xs = np.linspace(lo, hi, scan_points)
    dets = np.array([np.linalg.det(a - x * eye) for x in xs])
    roots = []
    for k in range(scan_points - 1):
        d0, d1 = dets[k], dets[k + 1]
        if d0 == 0.0:
            roots.append(xs[k])
            continue
        if np.sign(d0) != np.sign(d1):
            left, right = xs[k], xs[k + 1]
            sign_left = np.sign(d0)
            for _ in range(bisections):
                mid = 0.5 * (left + right)
                v = np.linalg.det(a - mid * eye)
                if v == 0.0:
                    left = right = mid
                    break
                if np.sign(v) == sign_left:
                    left = mid
                else:
                    right = mid
            roots.append(0.5 * (left + right))
    if dets[-1] == 0.0:
        roots.append(xs[-1])
    return np.array(sorted(roots, reverse=True))


def gaussian_loglik(data_vectors, cov):
    """Sum of zero-mean Gaussian log-densities via scipy.stats."""
    mvn = multivariate_normal(mean=np.zeros(cov.shape[0]), cov=cov)
    return float(np.sum(mvn.logpdf(data_vectors)))


def condition_joint_gaussian(joint_cov, dim_first, observed):
    """Posterior of the first block given the second in a zero-mean joint
    Gaussian, by generic block inversion."""
    joint_cov = np.asarray(joint_cov, dtype=float)
    s11 = joint_cov[:dim_first, :dim_first]
    s12 = joint_cov[:dim_first, dim_first:]
    s22 = joint_cov[dim_first:, dim_first:]
    gain = s12 @ np.linalg.inv(s22)
    mean = gain @ np.asarray(observed, dtype=float)
    cov = s11 - gain @ s12.T
    return mean, (cov + cov.T) / 2.0


def ppca_closed_form(second_moment, noise_var):
    """Direct probabilistic-PCA maximum likelihood loadings via a plain
    eigendecomposition (no whitening / generalized problem involved)."""
    values, vectors = np.linalg.eigh(np.asarray(second_moment, dtype=float))
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    q = int(np.sum(values > noise_var))
    return vectors[:, :q] * np.sqrt(values[:q] - noise_var), values[:q]


def random_spd(rng, dim, condition_boost=1.0):
    """Random symmetric positive-definite matrix."""
    a = rng.standard_normal((dim, dim))
    return a @ a.T + condition_boost * dim * np.eye(dim)
