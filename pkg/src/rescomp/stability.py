"""Stability selection over the penalty path.

For every penalty on a geometric grid (base-5 powers over a range of
exponents) the chosen fitter is re-run on row subsamples of the data, and
each possible edge records the fraction of refits that called it.  Edges
are finally declared present when their call fraction clears a threshold
(strictly), by default one half.

Subsamples are drawn without replacement, deterministically from the seed
and the repeat index, and are shared across penalties, so results are a
pure function of (data, grid, repeats, fraction, seed) no matter how the
work is scheduled.  A fitter failure on one subsample removes that repeat
from the denominator of the affected penalty only.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .em import EmRcaConfig, em_rca_fit
from .exceptions import InvalidInput, ParseError, RescompError
from .glasso import GlassoConfig, glasso_fit
from .io import fmt, read_json, write_json, write_rows_csv

logger = logging.getLogger(__name__)

FITTERS = ("glasso", "em_rca")
EDGE_MODES = ("support", "negative")
# Negative-entry edge calls use the same numeric-zero cutoff as support.
NEGATIVE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing penalties ``base ** exponents``."""

    exponents: np.ndarray
    lambdas: np.ndarray
    base: float = 5.0

    def __len__(self) -> int:
        return int(self.lambdas.shape[0])


def lambda_grid(count: int, lo_exp: float = -8.0, hi_exp: float = 3.0,
                base: float = 5.0) -> LambdaGrid:
    """Geometric penalty grid: exponents linearly spaced inclusive."""
    if count < 2:
        raise InvalidInput(f"grid needs at least 2 points, got {count}")
    if not lo_exp < hi_exp:
        raise InvalidInput(f"need lo_exp < hi_exp, got [{lo_exp}, {hi_exp}]")
    exponents = np.linspace(lo_exp, hi_exp, count)
    return LambdaGrid(exponents=exponents, lambdas=base ** exponents, base=base)


def edge_list(p: int) -> list:
    """Canonical enumeration of the p(p-1)/2 unordered edges."""
    return [(i, j) for i in range(p) for j in range(i + 1, p)]


@dataclass(frozen=True)
class EdgePath:
    """Per-penalty edge call fractions from subsampled refits.

    ``frequencies`` is (n_lambda, n_edges) over the canonical edge order;
    ``successes`` counts the refits that entered each penalty's denominator.
    """

    grid: LambdaGrid
    dim: int
    frequencies: np.ndarray
    repeats: int
    subsample_fraction: float
    seed: int
    successes: np.ndarray
    fitter: str = "glasso"
    edge_mode: str = "support"

    def frequency_map(self, lambda_index: int) -> dict:
        """Edge -> call fraction at one grid point (nonzero entries only)."""
        self._check_index(lambda_index)
        freqs = self.frequencies[lambda_index]
        edges = edge_list(self.dim)
        return {edges[k]: float(freqs[k]) for k in np.flatnonzero(freqs)}

    def _check_index(self, lambda_index: int) -> None:
        if not 0 <= lambda_index < len(self.grid):
            raise InvalidInput(
                f"lambda index {lambda_index} out of range [0, {len(self.grid)})"
            )


def _edges_called(entries: np.ndarray, edge_mode: str, threshold: float) -> np.ndarray:
    """Boolean vector over the canonical edge order."""
    p = entries.shape[0]
    iu = np.triu_indices(p, k=1)
    values = entries[iu]
    if edge_mode == "support":
        return np.abs(values) > threshold
    return values < -threshold


def _fit_edges(subsample: np.ndarray, fitter: str, lam: float, edge_mode: str,
               glasso_config, em_config) -> np.ndarray:
    if fitter == "glasso":
        n = subsample.shape[0]
        result = glasso_fit(subsample.T @ subsample / n, lam, config=glasso_config)
        entries = result.entries
    else:
        state = em_rca_fit(subsample, lam, config=em_config)
        entries = state.precision.entries
    return _edges_called(entries, edge_mode, NEGATIVE_THRESHOLD)


def _run_repeat(args):
    """One subsample, all penalties.  Top-level so it pickles for workers."""
    (repeat_index, data, lambdas, fraction, seed, fitter, edge_mode,
     glasso_config, em_config) = args
    n = data.shape[0]
    size = int(np.floor(fraction * n))
    rng = np.random.default_rng(np.random.SeedSequence([seed, repeat_index]))
    rows = np.sort(rng.choice(n, size=size, replace=False))
    subsample = data[rows]
    subsample = subsample - subsample.mean(axis=0)
    n_edges = data.shape[1] * (data.shape[1] - 1) // 2
    calls = np.zeros((len(lambdas), n_edges), dtype=bool)
    ok = np.zeros(len(lambdas), dtype=bool)
    for li, lam in enumerate(lambdas):
        try:
            calls[li] = _fit_edges(subsample, fitter, float(lam), edge_mode,
                                   glasso_config, em_config)
            ok[li] = True
        except RescompError as exc:
            logger.warning("repeat %d lambda %g: fit failed (%s)",
                           repeat_index, lam, exc)
    return repeat_index, calls, ok


def stability_select(data, fitter: str, grid: LambdaGrid, repeats: int = 100,
                     fraction: float = 0.9, seed: int = 0,
                     edge_mode: str = "support", n_jobs: int = 1,
                     glasso_config: GlassoConfig | None = None,
                     em_config: EmRcaConfig | None = None) -> EdgePath:
    """Edge call fractions across the penalty grid.

    Results are merged by repeat index, so ``n_jobs > 1`` changes only the
    wall time, never the output.
    """
    if fitter not in FITTERS:
        raise InvalidInput(f"fitter must be one of {FITTERS}, got {fitter!r}")
    if edge_mode not in EDGE_MODES:
        raise InvalidInput(f"edge_mode must be one of {EDGE_MODES}, got {edge_mode!r}")
    if not 0.0 < fraction <= 1.0:
        raise InvalidInput(f"fraction must be in (0, 1], got {fraction}")
    if repeats < 1:
        raise InvalidInput(f"repeats must be >= 1, got {repeats}")
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidInput(f"data must be n x p with p >= 2, got {data.shape}")
    if int(np.floor(fraction * data.shape[0])) < 1:
        raise InvalidInput("subsample would be empty")

    tasks = [
        (r, data, grid.lambdas, fraction, seed, fitter, edge_mode,
         glasso_config, em_config)
        for r in range(repeats)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_repeat, tasks))
    else:
        results = [_run_repeat(task) for task in tasks]
    results.sort(key=lambda item: item[0])

    n_edges = data.shape[1] * (data.shape[1] - 1) // 2
    counts = np.zeros((len(grid), n_edges), dtype=np.int64)
    successes = np.zeros(len(grid), dtype=np.int64)
    for _, calls, ok in results:
        counts[ok] += calls[ok]
        successes += ok.astype(np.int64)
    frequencies = np.zeros_like(counts, dtype=float)
    nonzero = successes > 0
    frequencies[nonzero] = counts[nonzero] / successes[nonzero, np.newaxis]
    return EdgePath(
        grid=grid,
        dim=data.shape[1],
        frequencies=frequencies,
        repeats=repeats,
        subsample_fraction=fraction,
        seed=seed,
        successes=successes,
        fitter=fitter,
        edge_mode=edge_mode,
    )


def threshold_edges(path: EdgePath, lambda_index: int,
                    threshold: float = 0.5) -> frozenset:
    """Edges with call fraction strictly greater than ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInput(f"threshold must be in [0, 1], got {threshold}")
    path._check_index(lambda_index)
    edges = edge_list(path.dim)
    picked = np.flatnonzero(path.frequencies[lambda_index] > threshold)
    return frozenset(edges[k] for k in picked)


def save_edge_path(path: EdgePath, json_path, csv_path=None) -> None:
    """JSON: full grid + dense per-penalty frequency arrays in canonical
    edge order.  CSV (optional): long form (lambda, i, j, frequency)."""
    edges = edge_list(path.dim)
    payload = {
        "version": 1,
        "dim": path.dim,
        "grid": {
            "base": path.grid.base,
            "exponents": [float(x) for x in path.grid.exponents],
            "lambdas": [float(x) for x in path.grid.lambdas],
        },
        "repeats": path.repeats,
        "subsample_fraction": path.subsample_fraction,
        "seed": path.seed,
        "fitter": path.fitter,
        "edge_mode": path.edge_mode,
        "successes": [int(s) for s in path.successes],
        "edges": [[i, j] for i, j in edges],
        "frequencies": [[float(f) for f in row] for row in path.frequencies],
    }
    write_json(json_path, payload)
    if csv_path is not None:
        rows = []
        for li, lam in enumerate(path.grid.lambdas):
            lam_txt = fmt(lam)
            for k, (i, j) in enumerate(edges):
                rows.append([lam_txt, i, j, fmt(path.frequencies[li, k])])
        write_rows_csv(csv_path, ["lambda", "i", "j", "frequency"], rows)


def load_edge_path(json_path) -> EdgePath:
    raw = read_json(json_path)
    try:
        grid = LambdaGrid(
            exponents=np.asarray(raw["grid"]["exponents"], dtype=float),
            lambdas=np.asarray(raw["grid"]["lambdas"], dtype=float),
            base=float(raw["grid"]["base"]),
        )
        return EdgePath(
            grid=grid,
            dim=int(raw["dim"]),
            frequencies=np.asarray(raw["frequencies"], dtype=float),
            repeats=int(raw["repeats"]),
            subsample_fraction=float(raw["subsample_fraction"]),
            seed=int(raw["seed"]),
            successes=np.asarray(raw["successes"], dtype=np.int64),
            fitter=str(raw.get("fitter", "glasso")),
            edge_mode=str(raw.get("edge_mode", "support")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed edge-path JSON {json_path}: {exc}") from exc
