"""Ranking and threshold metrics plus the trivial-solution closed forms.

AUC uses trapezoidal integration over the tie-grouped ROC curve, which makes
it exactly the Mann-Whitney pairwise statistic with half credit for ties.
Thresholded predictions are positive iff score > threshold (strict).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedMetricError

Array = np.ndarray


def _check_scored(scores, labels) -> tuple[Array, Array]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(
            f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    return scores, labels


def _require_both_classes(labels, what: str) -> None:
    pos = int(np.count_nonzero(labels == 1))
    if pos == 0 or pos == labels.size:
        raise UndefinedMetricError(f"{what} undefined without both classes")


def auc(scores, labels) -> float:
    """Area under the ROC curve, sweeping all distinct score thresholds.

    Tied scores collapse into a single ROC vertex, so the trapezoid area
    grants half credit to cross-class ties.
    """
    scores, labels = _check_scored(scores, labels)
    _require_both_classes(labels, "auc")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # group boundaries: last index of each run of equal scores
    boundary = np.flatnonzero(np.diff(s)) if s.size > 1 else np.array([], dtype=int)
    ends = np.concatenate([boundary, [s.size - 1]])
    tp = np.concatenate([[0], np.cumsum(y == 1)[ends]])
    fp = np.concatenate([[0], np.cumsum(y == 0)[ends]])
    tpr = tp / tp[-1]
    fpr = fp / fp[-1]
    return float(np.trapezoid(tpr, fpr))


def confusion(scores, labels, threshold: float):
    """(TP, FP, TN, FN) with positive predicted iff score > threshold.

    Infinite thresholds act as never-positive (+inf) / always-positive (-inf)
    sentinels.
    """
    scores, labels = _check_scored(scores, labels)
    if math.isnan(threshold):
        raise ConfigError("threshold must not be NaN")
    pred = scores > threshold
    pos = labels == 1
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    tn = int(np.count_nonzero(~pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    return tp, fp, tn, fn


def precision(conf) -> float:
    """TP/(TP+FP); a never-positive model gets 0 rather than an error."""
    tp, fp, _, _ = conf
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(conf) -> float:
    tp, _, _, fn = conf
    if tp + fn == 0:
        raise UndefinedMetricError("recall undefined without actual positives")
    return tp / (tp + fn)


def f1(conf) -> float:
    """Harmonic mean of precision and recall; 0 when TP = 0."""
    p = precision(conf)
    r = recall(conf)
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def g_score(conf) -> float:
    """Geometric mean of the per-class recalls."""
    tp, fp, tn, fn = conf
    if tp + fn == 0 or tn + fp == 0:
        raise UndefinedMetricError("g-score undefined without both classes")
    return math.sqrt((tp / (tp + fn)) * (tn / (tn + fp)))


def youden_threshold(scores, labels) -> float:
    """Threshold maximizing TPR - FPR over all distinct-score midpoints.

    Candidates are min(scores)-1, the midpoints of adjacent distinct sorted
    scores, and max(scores)+1; ties resolve to the smallest candidate.
    """
    scores, labels = _check_scored(scores, labels)
    _require_both_classes(labels, "youden threshold")
    distinct = np.unique(scores)
    candidates = np.concatenate([
        [distinct[0] - 1.0],
        (distinct[:-1] + distinct[1:]) / 2.0,
        [distinct[-1] + 1.0],
    ])
    pos = labels == 1
    n_pos = int(np.count_nonzero(pos))
    n_neg = scores.size - n_pos
    best_t = candidates[0]
    best_j = None  # J scaled by n_pos*n_neg, exact in integers
    for t in candidates:
        pred = scores > t
        j = (np.count_nonzero(pred & pos) * n_neg
             - np.count_nonzero(pred & ~pos) * n_pos)
        if best_j is None or j > best_j:
            best_j = j
            best_t = t
    return float(best_t)


# ---------------------------------------------------------------------------
# Trivial-solution closed forms


@dataclass
class TrivialSolution:
    """Best constant predictor: its NLL-optimal constant and the resulting
    loss and F1 under the continuous confusion matrix."""

    minority_fraction: float
    loss: float
    f1: float


def trivial_confusion(eps: float):
    """Continuous confusion matrix of the constant predictor, per unit mass:
    TP = FP = eps/2 and TN = FN = (1-eps)/2."""
    return 0.5 * eps, 0.5 * eps, 0.5 * (1.0 - eps), 0.5 * (1.0 - eps)


def trivial_solution(eps: float) -> TrivialSolution:
    """Loss and F1 of the optimal constant predictor at minority fraction eps.

    loss = -(eps ln eps + (1-eps) ln(1-eps)); f1 = eps/(0.5+eps).
    """
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"minority fraction must lie in (0,1), got {eps}")
    loss = -(eps * math.log(eps) + (1.0 - eps) * math.log(1.0 - eps))
    return TrivialSolution(eps, loss, eps / (0.5 + eps))


def loss_f1_curve(minority_fraction: float, grid) -> list[tuple[float, float, float]]:
    """Rows (eps, loss, f1) for sweeping the constant predictor over ``grid``.

    The loss is that of constant output eps under the true minority fraction;
    the F1 is the continuous-confusion score of the constant eps itself.
    """
    if not 0.0 < minority_fraction < 1.0:
        raise ConfigError(
            f"minority fraction must lie in (0,1), got {minority_fraction}")
    m = minority_fraction
    rows = []
    for eps in grid:
        if not 0.0 < eps < 1.0:
            raise ConfigError(f"grid point {eps} outside (0,1)")
        loss = -(m * math.log(eps) + (1.0 - m) * math.log(1.0 - eps))
        rows.append((float(eps), loss, f1(trivial_confusion(eps))))
    return rows


# ---------------------------------------------------------------------------
# Series statistics


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ShapeError("pearson needs two equal-length vectors of size >= 2")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise UndefinedMetricError("pearson undefined for constant input")
    return float(dx @ dy) / denom


def performance_error(f1_series, loss_series) -> float:
    """1 + pearson(f1, loss): 0 when loss and F1 move perfectly inversely."""
    return 1.0 + pearson(f1_series, loss_series)


def generalization_error(train_loss: float, test_loss: float) -> float:
    """Plain difference: test loss minus train loss."""
    return test_loss - train_loss


def generalization_error_f1(train_f1: float, test_f1: float) -> float:
    """Plain difference: test F1 minus train F1."""
    return test_f1 - train_f1


@dataclass
class ScoredPredictions:
    """Scores with ground-truth labels and an optional decision threshold."""

    scores: Array
    labels: Array
    threshold: float | None = None

    def auc(self) -> float:
        return auc(self.scores, self.labels)

    def youden(self) -> float:
        return youden_threshold(self.scores, self.labels)

    def confusion(self, threshold: float | None = None):
        t = self.threshold if threshold is None else threshold
        if t is None:
            raise ConfigError("no threshold set")
        return confusion(self.scores, self.labels, t)
