"""Evaluation metrics: concordance correlation, macro F1, multi-label F1.

Plain-numpy counterparts to the differentiable losses; mask-aware and pure.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ShapeError
from .losses import as_mask

DEGENERATE_EPS = 1e-12


def ccc(x, y) -> float:
    """Concordance correlation coefficient in [-1, 1].

    Population (1/N) normalization for covariance and variances.  When the
    denominator is degenerate (< 1e-12) returns 1.0 for identical inputs,
    0.0 otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError("ccc", "inputs must be equal-length 1-D sequences", x.shape, y.shape)
    if x.size == 0:
        raise ShapeError("ccc", "inputs must be non-empty", x.shape)
    mx, my = x.mean(), y.mean()
    vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
    cov = ((x - mx) * (y - my)).mean()
    den = vx + vy + (mx - my) ** 2
    if den < DEGENERATE_EPS:
        return 1.0 if np.abs(x - y).max() < DEGENERATE_EPS else 0.0
    return float(2.0 * cov / den)


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0  # zero-support convention
    return 2.0 * tp / denom


def macro_f1(pred_labels, gt_labels, n_classes: int, mask=None) -> tuple[float, list[float]]:
    """Unweighted mean of per-class F1 over valid frames.

    Classes absent from both prediction and truth contribute F1 = 0.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    gt = np.asarray(gt_labels, dtype=np.int64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ShapeError("macro_f1", "labels must be equal-length 1-D sequences",
                         pred.shape, gt.shape)
    m = as_mask(mask, pred.shape[0])
    pred, gt = pred[m], gt[m]
    for name, arr in (("pred", pred), ("gt", gt)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"macro_f1: {name} label out of range [0, {n_classes})")
    per_class = []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (gt == c)))
        fp = int(np.sum((pred == c) & (gt != c)))
        fn = int(np.sum((pred != c) & (gt == c)))
        per_class.append(_f1_from_counts(tp, fp, fn))
    return float(np.mean(per_class)), per_class


def multilabel_f1(scores, gt, mask=None, threshold: float = 0.5,
                  from_logits: bool = True) -> tuple[float, list[float]]:
    """Macro-averaged per-unit binary F1 at a sigmoid threshold.

    ``scores`` may be raw logits (default) or probabilities; the decision is
    sigmoid(score) >= threshold, resp. score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gt = np.asarray(gt)
    if scores.ndim != 2 or scores.shape != gt.shape:
        raise ShapeError("multilabel_f1", "scores and gt must be equal-shape (T, units)",
                         scores.shape, gt.shape)
    m = as_mask(mask, scores.shape[0])
    scores, gt = scores[m], gt[m]
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("multilabel_f1: gt must be binary on valid frames")
    probs = expit(scores) if from_logits else scores
    decisions = probs >= threshold
    truth = gt.astype(bool)
    per_unit = []
    for u in range(scores.shape[1]):
        tp = int(np.sum(decisions[:, u] & truth[:, u]))
        fp = int(np.sum(decisions[:, u] & ~truth[:, u]))
        fn = int(np.sum(~decisions[:, u] & truth[:, u]))
        per_unit.append(_f1_from_counts(tp, fp, fn))
    return float(np.mean(per_unit)), per_unit


def format_report(metrics: dict[str, float]) -> str:
    """Machine-readable key=value block, 6 decimal places, one metric per line."""
    return "\n".join(f"{k}={v:.6f}" for k, v in metrics.items()) + "\n"
