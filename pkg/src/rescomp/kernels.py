"""Gram matrices for two-group time series and residual scoring.

A squared-exponential kernel is evaluated over the concatenated control and
treatment time grids, treating every pair alike (both series are modeled as
draws of one underlying function), plus a diagonal jitter expressed as a
fraction of the data variance.  Expression profiles are then decomposed
against this Gram matrix: features whose variation the temporal covariance
cannot explain get large projections onto the retained residual basis, and
the per-feature projection norms serve as difference scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import linalg
from .exceptions import FileIOError, InvalidInput, ParseError
from .rca import rca_fit

GROUPS = ("control", "treatment")


@dataclass(frozen=True)
class TimeGrid:
    """Observation times with their group labels."""

    times: np.ndarray
    groups: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or not np.all(np.isfinite(times)):
            raise InvalidInput("times must be a finite 1-d vector")
        if len(self.groups) != times.shape[0]:
            raise InvalidInput(
                f"{times.shape[0]} times but {len(self.groups)} group labels"
            )
        for g in self.groups:
            if g not in GROUPS:
                raise InvalidInput(f"unknown group label {g!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "groups", tuple(self.groups))

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @classmethod
    def from_csv(cls, path) -> "TimeGrid":
        try:
            with open(path, "r", newline="", encoding="utf-8") as handle:
                reader = csv.reader(handle)
                next(reader, None)
                times, groups = [], []
                for row in reader:
                    if not row:
                        continue
                    times.append(float(row[0]))
                    groups.append(row[1].strip())
        except OSError as exc:
            raise FileIOError(path, f"cannot read time grid ({exc})") from exc
        except (ValueError, IndexError) as exc:
            raise ParseError(f"malformed time-grid CSV {path}: {exc}") from exc
        return cls(times=np.asarray(times), groups=tuple(groups))


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential hyperparameters (held fixed, not optimized)."""

    lengthscale: float = 20.0
    jitter_fraction: float = 0.01

    def __post_init__(self):
        if self.lengthscale <= 0:
            raise InvalidInput(f"lengthscale must be positive, got {self.lengthscale}")
        if self.jitter_fraction < 0:
            raise InvalidInput("jitter_fraction must be nonnegative")


def mean_column_variance(data) -> float:
    """Mean per-column variance of the (column-centered) data; the scale
    the diagonal jitter is expressed against."""
    data = np.asarray(data, dtype=float)
    centered = data - data.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=0) / data.shape[0]))


def rbf_gram(grid: TimeGrid, spec: KernelSpec, data_variance: float | None = None) -> np.ndarray:
    """``K[i, j] = exp(-(t_i - t_j)^2 / (2 l^2))`` over all time pairs
    regardless of group, plus ``jitter_fraction * data_variance`` on the
    diagonal."""
    if spec.jitter_fraction > 0:
        if data_variance is None or data_variance <= 0:
            raise InvalidInput("positive data_variance required when jitter is used")
    diffs = grid.times[:, np.newaxis] - grid.times[np.newaxis, :]
    gram = np.exp(-0.5 * (diffs / spec.lengthscale) ** 2)
    if spec.jitter_fraction > 0:
        gram = gram + spec.jitter_fraction * data_variance * np.eye(len(grid))
    return gram


def residual_scores(data, gram) -> tuple:
    """Per-feature residual projection norms and the selected rank.

    ``data`` is timepoints x features; ``gram`` must match the number of
    timepoints.  The residual basis is the set of generalized eigenvectors
    of ``(data @ data.T / p, gram)`` with eigenvalue above one; feature
    ``j`` scores ``||S_q.T @ data[:, j]||``.  With no retained components
    all scores are zero.  Centering is the caller's job.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise InvalidInput(f"data must be 2-d, got shape {data.shape}")
    gram = linalg.check_symmetric(gram, name="gram")
    n, p = data.shape
    if gram.shape[0] != n:
        raise InvalidInput(
            f"gram is {gram.shape[0]} x {gram.shape[0]} but data has {n} rows"
        )
    solution = rca_fit(data @ data.T / p, gram, role="dual")
    if solution.rank == 0:
        return np.zeros(p), 0
    projections = solution.basis.T @ data
    scores = np.sqrt(np.sum(projections * projections, axis=0))
    return scores, solution.rank
