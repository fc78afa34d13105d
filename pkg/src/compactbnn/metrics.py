"""RMSE, accuracy, ROC curves and trapezoidal AUC."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

__all__ = ["RocCurve", "rmse", "accuracy", "roc_curve", "auc", "one_vs_all_roc", "write_roc_csv"]


def _paired(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def rmse(predictions, targets):
    p, t = _paired(np.asarray(predictions, float).ravel(), np.asarray(targets, float).ravel())
    return float(np.sqrt(np.mean((p - t) ** 2)))


def accuracy(predicted_labels, true_labels):
    """Percentage of matching labels."""
    p, t = _paired(np.asarray(predicted_labels).ravel(), np.asarray(true_labels).ravel())
    return 100.0 * int(np.count_nonzero(p == t)) / p.size


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    class_index: int = 1

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, labels, class_index=1):
    """ROC from thresholds swept over the distinct scores, highest first.

    Tied scores move together in a single step. ``labels`` are booleans (or
    0/1) marking the positive class.
    """
    s, y = _paired(np.asarray(scores, float).ravel(), np.asarray(labels).ravel())
    y = y.astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate labels: ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    return RocCurve(fpr, tpr, class_index)


def auc(curve):
    """Trapezoidal area under the ROC curve."""
    return float(_trapezoid(curve.tpr, curve.fpr))


def one_vs_all_roc(probabilities, labels):
    """One curve per class, scoring class ``k`` against the rest by its probability.

    Classes absent from ``labels`` (or covering all of it) give ``None``.
    """
    probs = np.asarray(probabilities, float)
    labels = np.asarray(labels).ravel()
    curves = []
    for k in range(probs.shape[1]):
        positive = labels == k
        if positive.all() or not positive.any():
            curves.append(None)
        else:
            curves.append(roc_curve(probs[:, k], positive, k))
    return curves


def write_roc_csv(rows, path):
    """Write ``(tag..., class, fpr, tpr)`` rows with the given header first."""
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerows(rows)
