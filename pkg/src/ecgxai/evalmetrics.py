"""Classification metrics, the 3MCS composite and isotonic calibration."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import UndefinedMetricError


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(int)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    return scores, labels


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the midrank form of the pair count."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum of precision times recall increment over thresholds.

    Thresholds are the distinct scores in descending order; tied scores
    enter together.
    """
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    predicted = np.arange(1, y.size + 1)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), y.size - 1]
    tp, predicted = tp[last], predicted[last]
    precision = tp / predicted
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def confusion(pred, labels) -> tuple[int, int, int, int]:
    pred = np.asarray(pred).astype(int).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    tp = int(np.sum((pred == 1) & (labels == 1)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    return tp, tn, fp, fn


def mcc(pred, labels) -> float:
    """Matthews correlation; 0 (with a warning) when a margin is empty."""
    tp, tn, fp, fn = confusion(pred, labels)
    denom = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        warnings.warn("MCC denominator is zero; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float((tp * tn - fp * fn) / np.sqrt(denom))


def three_mcs(auroc_value: float, auprc_value: float, mcc_value: float) -> float:
    """AUROC * AUPRC * (1 + MCC) / 2."""
    return auroc_value * auprc_value * (1.0 + mcc_value) / 2.0


@dataclass
class IsotonicMap:
    """Non-decreasing step map from scores to calibrated probabilities.

    ``x`` holds the block-start scores (ascending) and ``y`` the pooled
    label means. An empty ``x`` is the identity map.
    """

    x: np.ndarray
    y: np.ndarray

    @property
    def is_identity(self) -> bool:
        return self.x.size == 0

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.is_identity:
            return np.clip(s, 0.0, 1.0)
        idx = np.searchsorted(self.x, s, side="right") - 1
        return np.clip(self.y[np.clip(idx, 0, None)], 0.0, 1.0)


def pava(values, weights=None) -> np.ndarray:
    """Pool-adjacent-violators: weighted least-squares non-decreasing fit."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    means, wts, sizes = [], [], []
    for vi, wi in zip(v, w):
        means.append(vi)
        wts.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, n1 = means.pop(), wts.pop(), sizes.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wts.append(wt)
            sizes.append(n1 + n2)
    return np.repeat(means, sizes)


def isotonic_calibrate(scores, labels) -> IsotonicMap:
    """Fit labels against ascending scores; tied scores are pooled first."""
    scores, labels = _check(scores, labels)
    uniq, inverse = np.unique(scores, return_inverse=True)
    if uniq.size < 2:
        return IsotonicMap(np.array([]), np.array([]))
    counts = np.bincount(inverse)
    means = np.bincount(inverse, weights=labels) / counts
    fitted = pava(means, counts)
    # keep one knot per constant block
    keep = np.r_[True, np.diff(fitted) != 0]
    return IsotonicMap(uniq[keep], fitted[keep])


def calibrated_labels(scores, calibration: IsotonicMap, threshold: float = 0.5) -> np.ndarray:
    return (calibration(scores) >= threshold).astype(int)


def evaluate(scores, labels, calibration: IsotonicMap | None = None) -> dict:
    """AUROC, AUPRC, MCC (isotonic-calibrated, 0.5 threshold) and 3MCS.

    When ``calibration`` is omitted it is fitted on ``scores`` themselves.
    """
    scores, labels = _check(scores, labels)
    if calibration is None:
        calibration = isotonic_calibrate(scores, labels)
    a = auroc(scores, labels)
    p = auprc(scores, labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = mcc(calibrated_labels(scores, calibration), labels)
    return {"auroc": a, "auprc": p, "mcc": m, "3mcs": three_mcs(a, p, m)}


def summarize(per_fold: list[dict]) -> dict:
    """Mean and sample sd of each metric over folds."""
    out = {}
    for key in per_fold[0]:
        vals = np.array([d[key] for d in per_fold], dtype=float)
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out[key] = {"mean": float(vals.mean()), "sd": sd}
    return out
