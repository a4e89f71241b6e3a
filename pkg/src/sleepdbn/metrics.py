"""Next-stage and health-status classification metrics."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def accuracy(truth, pred) -> float:
    truth, pred = np.asarray(truth), np.asarray(pred)
    if truth.size == 0 or truth.shape != pred.shape:
        raise MetricError("accuracy needs equal-length, non-empty inputs")
    return float(np.mean(truth == pred))


def macro_f1(truth, pred) -> float:
    """Unweighted mean of per-class F1 over the classes present in ``truth``."""
    truth, pred = np.asarray(truth), np.asarray(pred)
    if truth.size == 0 or truth.shape != pred.shape:
        raise MetricError("macro_f1 needs equal-length, non-empty inputs")
    scores = []
    for c in np.unique(truth):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def binary_auroc(scores, positive) -> float:
    """Rank-sum AUROC; tied scores get half credit. NaN if a class is missing."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = positive.sum()
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def mean_ovr_auroc(scores, labels, n_classes: int = 3) -> float:
    """One-vs-rest AUROC per class, averaged over classes where it is defined."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim != 2 or len(scores) == 0 or len(scores) != len(labels):
        raise MetricError("scores must be (n, n_classes) matching labels")
    per = [binary_auroc(scores[:, c], labels == c) for c in range(n_classes)]
    per = [a for a in per if not np.isnan(a)]
    if not per:
        raise MetricError("AUROC undefined: fewer than two classes present")
    return float(np.mean(per))


def compute_metrics(predictions, truths, scores, labels) -> tuple[float, float, float]:
    return accuracy(truths, predictions), macro_f1(truths, predictions), mean_ovr_auroc(scores, labels)
