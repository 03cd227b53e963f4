"""Detector evaluation against ground-truth masks.

The headline metric is the spatial overlap index (Dice coefficient),
which coincides exactly with the F1 score; both are computed and the
identity is asserted on every call. ROC tables are produced over a grid
of adaptive-threshold fractions, and the best threshold is the grid point
maximizing the overlap index. The area under the curve is deliberately
not computed; the ROC table is emitted for plotting only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import Mask, ScoreMap
from .detectors import apply_threshold
from .errors import EvaluationError, ValidationError

# Threshold fractions 0.00, 0.02, ..., 1.00
DEFAULT_THRESHOLD_GRID = np.linspace(0.0, 1.0, 51)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class EvalReport:
    """Confusion at the reported threshold, overlap index, ROC sweep, best point."""

    threshold: float
    confusion: ConfusionCounts
    soi: float
    roc: tuple[tuple[float, float, float], ...]
    best: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "confusion": self.confusion.to_dict(),
            "soi": self.soi,
            "roc": [{"fpr": f, "tpr": t, "t": x} for f, t, x in self.roc],
            "best": {"t": self.best[0], "soi": self.best[1]},
        }


def _check_dims(pred: Mask, truth: Mask) -> None:
    if pred.dims != truth.dims:
        raise ValidationError(
            f"mask dims {pred.dims} do not match ground truth dims {truth.dims}"
        )


def confusion(pred: Mask, truth: Mask) -> ConfusionCounts:
    """Exact pixel counts of the four confusion cells."""
    _check_dims(pred, truth)
    p = pred.flat.astype(bool)
    t = truth.flat.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def f1_from_counts(counts: ConfusionCounts) -> float:
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        raise EvaluationError("F1 undefined: no positives in either mask")
    return 2 * counts.tp / denom


def soi(pred: Mask, truth: Mask) -> float:
    """Spatial overlap index 2|A∩B| / (|A| + |B|) of two binary masks.

    Undefined (raises) when both masks are empty. Equals the F1 score
    exactly; the identity is asserted on every call.
    """
    _check_dims(pred, truth)
    a = pred.n_positive
    b = truth.n_positive
    if a + b == 0:
        raise EvaluationError("overlap index undefined: both masks are empty")
    overlap = int(np.count_nonzero(pred.flat.astype(bool) & truth.flat.astype(bool)))
    value = 2 * overlap / (a + b)
    assert value == f1_from_counts(confusion(pred, truth))
    return value


def _check_sweep_inputs(scores: ScoreMap, truth: Mask, grid: np.ndarray) -> np.ndarray:
    if scores.dims != truth.dims:
        raise ValidationError(
            f"score dims {scores.dims} do not match ground truth dims {truth.dims}"
        )
    positives = truth.n_positive
    if positives == 0 or positives == truth.flat.size:
        raise EvaluationError(
            "ground truth must contain at least one positive and one negative pixel",
            positives=positives,
            pixels=int(truth.flat.size),
        )
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("threshold grid must be a nonempty 1-D array")
    if grid.min() < 0.0 or grid.max() > 1.0 or np.any(np.diff(grid) < 0):
        raise ValidationError("threshold grid must be ascending fractions within [0, 1]")
    return grid


def roc_curve(
    scores: ScoreMap, truth: Mask, grid: np.ndarray | None = None
) -> tuple[tuple[float, float, float], ...]:
    """(FPR, TPR, t) for each threshold fraction of the grid.

    Both rates are nonincreasing in t because the flagged set shrinks as
    the threshold rises.
    """
    grid = _check_sweep_inputs(scores, truth, DEFAULT_THRESHOLD_GRID if grid is None else grid)
    t_flags = truth.flat.astype(bool)
    n_pos = int(t_flags.sum())
    n_neg = t_flags.size - n_pos
    points = []
    for t in grid:
        pred = apply_threshold(scores, float(t)).flat.astype(bool)
        tp = int(np.count_nonzero(pred & t_flags))
        fp = int(np.count_nonzero(pred & ~t_flags))
        points.append((fp / n_neg, tp / n_pos, float(t)))
    return tuple(points)


def best_threshold(
    scores: ScoreMap, truth: Mask, grid: np.ndarray | None = None
) -> tuple[float, float]:
    """Grid point with the highest overlap index; ties go to the smaller t."""
    grid = _check_sweep_inputs(scores, truth, DEFAULT_THRESHOLD_GRID if grid is None else grid)
    best_t, best_soi = float(grid[0]), -1.0
    for t in grid:
        value = soi(apply_threshold(scores, float(t)), truth)
        if value > best_soi:
            best_t, best_soi = float(t), value
    return best_t, best_soi


def evaluate(
    scores: ScoreMap,
    truth: Mask,
    grid: np.ndarray | None = None,
    t: float | None = None,
) -> EvalReport:
    """Full sweep: ROC table, best threshold, confusion at t (default: best t)."""
    grid = _check_sweep_inputs(scores, truth, DEFAULT_THRESHOLD_GRID if grid is None else grid)
    roc = roc_curve(scores, truth, grid)
    best = best_threshold(scores, truth, grid)
    at = best[0] if t is None else float(t)
    pred = apply_threshold(scores, at)
    counts = confusion(pred, truth)
    return EvalReport(threshold=at, confusion=counts, soi=soi(pred, truth), roc=roc, best=best)
