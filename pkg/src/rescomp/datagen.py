"""Seeded synthetic data: a sparse-precision Gaussian Markov random field
confounded by a planted low-rank component plus isotropic noise.

The generative recipe is ``Y = X W.T + Z + E`` with latent rows
``x ~ N(0, I_q)``, GMRF rows ``z ~ N(0, P^{-1})`` for a sparse planted
precision ``P``, and iid noise.  ``W`` is scaled so the low-rank part and
the GMRF part explain equal variance, and the noise variance is set from
the requested signal-to-noise ratio, where "signal" is the total structured
variance ``X W.T + Z``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg
from .exceptions import InvalidInput
from .glasso import SparsePrecision, support_of

# Diagonal margin (times the mean diagonal) added beyond the smallest
# eigenvalue when repairing the raw sparse precision to be PD.
PD_MARGIN = 0.1


@dataclass(frozen=True)
class SimSpec:
    """Simulation parameters; defaults match the reference confounded setup."""

    n: int = 100
    p: int = 50
    q: int = 3
    sparsity: float = 0.01
    edge_mean: float = 1.0
    edge_var: float = 2.0
    snr: float = 10.0
    seed: int = 0

    def validate(self) -> "SimSpec":
        if self.n < 1 or self.p < 2 or self.q < 0:
            raise InvalidInput(f"invalid dimensions n={self.n} p={self.p} q={self.q}")
        if not 0.0 < self.sparsity < 1.0:
            raise InvalidInput(f"sparsity must be in (0, 1), got {self.sparsity}")
        if self.edge_var <= 0 or self.snr <= 0:
            raise InvalidInput("edge_var and snr must be positive")
        return self


@dataclass(frozen=True)
class SimInstance:
    data: np.ndarray
    truth_precision: SparsePrecision
    truth_loadings: np.ndarray
    truth_latents: np.ndarray
    noise_var: float
    spec: SimSpec
    # realized components, kept so variance bookkeeping is checkable
    truth_gmrf: np.ndarray | None = None
    truth_noise: np.ndarray | None = None


def gen_sparse_precision(p: int, sparsity: float, seed) -> SparsePrecision:
    """Sparse symmetric PD precision with ``round(sparsity * p(p-1)/2)``
    off-diagonal edges, values drawn N(edge mean 1, variance 2).

    The support is sampled uniformly among unordered pairs; positive
    definiteness is enforced afterwards by diagonal loading, which leaves
    the support untouched.
    """
    n_pairs = p * (p - 1) // 2
    n_edges = int(round(sparsity * n_pairs))
    rng = np.random.default_rng(seed)
    entries = np.eye(p)
    if n_edges > 0:
        chosen = rng.choice(n_pairs, size=n_edges, replace=False)
        chosen.sort()
        rows, cols = np.triu_indices(p, k=1)
        values = rng.normal(loc=1.0, scale=math.sqrt(2.0), size=n_edges)
        entries[rows[chosen], cols[chosen]] = values
        entries[cols[chosen], rows[chosen]] = values
    smallest = float(np.linalg.eigvalsh(entries)[0])
    load = max(0.0, -smallest) + PD_MARGIN * float(np.mean(np.abs(np.diagonal(entries))))
    entries += load * np.eye(p)
    return SparsePrecision(entries=entries, support=support_of(entries))


def gen_confounded(spec: SimSpec) -> SimInstance:
    """Draw one confounded GMRF instance from a fully seeded spec."""
    spec = spec.validate()
    root = np.random.SeedSequence(spec.seed)
    seeds = root.spawn(5)
    precision = gen_sparse_precision(spec.p, spec.sparsity, seeds[0])
    rng_x = np.random.default_rng(seeds[1])
    rng_w = np.random.default_rng(seeds[2])
    rng_z = np.random.default_rng(seeds[3])
    rng_e = np.random.default_rng(seeds[4])

    lower = linalg.cholesky(precision.entries)
    gmrf_var = float(np.trace(linalg.chol_solve(lower, np.eye(spec.p))))

    latents = rng_x.standard_normal((spec.n, spec.q))
    raw_w = rng_w.standard_normal((spec.p, spec.q))
    if spec.q > 0:
        scale = math.sqrt(gmrf_var / float(np.sum(raw_w * raw_w)))
        loadings = raw_w * scale
    else:
        loadings = raw_w  # empty (p, 0)

    gmrf = solve_triangular(lower.T, rng_z.standard_normal((spec.p, spec.n)),
                            lower=False).T
    structured_var = (float(np.sum(loadings * loadings)) + gmrf_var) / spec.p
    if math.isinf(spec.snr):
        noise_var = 0.0
        noise = np.zeros((spec.n, spec.p))
    else:
        noise_var = structured_var / spec.snr
        noise = math.sqrt(noise_var) * rng_e.standard_normal((spec.n, spec.p))
    data = latents @ loadings.T + gmrf + noise
    return SimInstance(
        data=data,
        truth_precision=precision,
        truth_loadings=loadings,
        truth_latents=latents,
        noise_var=noise_var,
        spec=spec,
        truth_gmrf=gmrf,
        truth_noise=noise,
    )


def save_instance(instance: SimInstance, out_dir) -> Path:
    """Serialize an instance to ``Y.csv``, ``precision.csv``, ``edges.csv``
    and ``meta.json`` under ``out_dir``."""
    from .io import write_matrix_csv, write_edges_csv, write_json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "Y.csv", instance.data, prefix="y")
    write_matrix_csv(out / "precision.csv", instance.truth_precision.entries,
                     prefix="p")
    write_edges_csv(out / "edges.csv", sorted(instance.truth_precision.support))
    spec_dict = asdict(instance.spec)
    if math.isinf(spec_dict["snr"]):
        spec_dict["snr"] = "inf"
    meta = {
        "version": 1,
        "spec": spec_dict,
        "noise_var": instance.noise_var,
        "n_edges": len(instance.truth_precision.support),
    }
    write_json(out / "meta.json", meta)
    return out
