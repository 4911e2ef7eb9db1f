"""Edge-recovery and ranking metrics.

Precision-recall over scored edge sets (threshold sweep with tied scores
processed as one block, area by trapezoid over recall) and ROC curves whose
area equals the Mann-Whitney statistic under the same block tie handling.
Only strictly positive edge scores enter a precision-recall sweep; the
curve is anchored at recall zero with the first block's precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInput
from .glasso import SparsePrecision
from .io import fmt, write_json, write_rows_csv

# Entries at or below this magnitude are numerically zero (matches the
# sparse-precision support threshold).
EDGE_EPS = 1e-8


@dataclass(frozen=True)
class EdgeScoreSet:
    """Nonnegative edge scores against a ground-truth edge set."""

    scores: dict
    truth: frozenset
    universe_size: int


@dataclass(frozen=True)
class Curve:
    """Ordered curve points plus trapezoidal area.

    ``points`` are (recall, precision) or (fpr, tpr) pairs with the first
    coordinate non-decreasing.
    """

    points: tuple
    area: float
    kind: str = "pr"


def edges_from_precision(precision, mode: str = "support") -> dict:
    """Scored edge map from a precision matrix.

    ``support`` scores each called edge by |P_ij|; ``negative`` calls only
    (numerically) strictly negative entries, scored by -P_ij.
    """
    if mode not in ("support", "negative"):
        raise InvalidInput(f"mode must be 'support' or 'negative', got {mode!r}")
    entries = precision.entries if isinstance(precision, SparsePrecision) else precision
    entries = np.asarray(entries, dtype=float)
    p = entries.shape[0]
    scored = {}
    for i in range(p):
        for j in range(i + 1, p):
            value = entries[i, j]
            if mode == "support":
                if abs(value) > EDGE_EPS:
                    scored[(i, j)] = abs(value)
            else:
                if value < -EDGE_EPS:
                    scored[(i, j)] = -value
    return scored


def _trapezoid(points) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def precision_recall(scores: EdgeScoreSet) -> Curve:
    """Precision-recall curve over a descending score-threshold sweep.

    Edges sharing a score enter as one block.  Edges scored zero (or
    missing from the map) are never called.
    """
    if not scores.truth:
        raise InvalidInput("ground-truth edge set is empty")
    n_truth = len(scores.truth)
    positive = [(s, e) for e, s in scores.scores.items() if s > 0.0]
    if not positive:
        prevalence = n_truth / scores.universe_size
        return Curve(points=((0.0, prevalence),), area=0.0, kind="pr")
    values = sorted({s for s, _ in positive}, reverse=True)
    points = []
    tp = fp = 0
    by_score = {}
    for s, e in positive:
        by_score.setdefault(s, []).append(e)
    for s in values:
        block = by_score[s]
        tp += sum(1 for e in block if e in scores.truth)
        fp += len(block) - sum(1 for e in block if e in scores.truth)
        points.append((tp / n_truth, tp / (tp + fp)))
    points.insert(0, (0.0, points[0][1]))
    return Curve(points=tuple(points), area=_trapezoid(points), kind="pr")


def roc(score_values, labels) -> Curve:
    """ROC curve with block tie handling; area equals the Mann-Whitney
    statistic.  Raises ``InvalidInput`` unless both classes are present."""
    score_values = np.asarray(score_values, dtype=float).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    if score_values.shape != labels.shape:
        raise InvalidInput("scores and labels must have matching length")
    n_pos = int(np.sum(labels))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInput("both classes must be present")
    order = np.argsort(-score_values, kind="stable")
    sorted_scores = score_values[order]
    sorted_labels = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    k = 0
    while k < sorted_scores.size:
        block_end = k
        while (block_end + 1 < sorted_scores.size
               and sorted_scores[block_end + 1] == sorted_scores[k]):
            block_end += 1
        block = sorted_labels[k : block_end + 1]
        tp += int(np.sum(block))
        fp += block.size - int(np.sum(block))
        points.append((fp / n_neg, tp / n_pos))
        k = block_end + 1
    return Curve(points=tuple(points), area=_trapezoid(points), kind="roc")


def scores_from_frequencies(frequencies, edges) -> dict:
    """Edge score map out of one penalty's stability call fractions."""
    return {edge: float(f) for edge, f in zip(edges, frequencies) if f > 0.0}


def envelope_frequencies(frequency_matrix) -> np.ndarray:
    """Per-edge maximum call fraction across the penalty grid: the
    path-summary score used for a single aggregate curve."""
    return np.max(np.asarray(frequency_matrix, dtype=float), axis=0)


def save_curve_csv(path, curve: Curve) -> None:
    header = ["recall", "precision"] if curve.kind == "pr" else ["fpr", "tpr"]
    rows = [[fmt(x), fmt(y)] for x, y in curve.points]
    write_rows_csv(path, header, rows)


def save_curve_json(path, curve: Curve) -> None:
    write_json(path, {
        "version": 1,
        "kind": curve.kind,
        "points": [[float(x), float(y)] for x, y in curve.points],
        "area": float(curve.area),
    })
