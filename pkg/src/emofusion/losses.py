"""Task losses: CCC-based regression, softmax cross-entropy, stable BCE.

All losses take a per-frame validity mask (True = frame participates) and
are differentiable end to end through the autograd graph.  Masked-out
frames never influence the value or the gradient.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tz
from .errors import ShapeError
from .tensor import Tensor


def as_mask(mask, n: int) -> np.ndarray:
    """Validate/normalize a per-frame validity mask of length n."""
    if mask is None:
        return np.ones(n, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ShapeError("mask", f"mask must have shape ({n},)", m.shape)
    return m


def _const(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype))


def _ccc_1d(x: Tensor, y: np.ndarray) -> Tensor:
    """Differentiable concordance of a 1-D prediction against constants.

    Population-normalized covariance and variances; the raw quotient is
    used, so a degenerate (zero) denominator propagates a non-finite value
    for the training NaN-guard to catch.
    """
    n = x.shape[0]
    mu_x = tz.reduce_mean(x)
    xc = x - tz.broadcast_to(mu_x, (n,))
    mu_y = float(y.mean())
    yc = _const(y - mu_y, x.dtype)
    cov = tz.reduce_mean(xc * yc)
    var_x = tz.reduce_mean(xc * xc)
    var_y = float(((y - mu_y) ** 2).mean())
    gap = mu_x - _const(mu_y, x.dtype)
    den = var_x + gap * gap + _const(var_y, x.dtype)
    return tz.scale(cov * tz.reciprocal(den), 2.0)


def va_loss(pred: Tensor, gt: np.ndarray, mask=None) -> Tensor:
    """1 - mean(CCC_valence, CCC_arousal) over valid frames."""
    if pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeError("va_loss", "predictions must be (T, 2)", pred.shape)
    gt = np.asarray(gt, dtype=pred.dtype)
    if gt.shape != pred.shape:
        raise ShapeError("va_loss", "ground truth shape mismatch", pred.shape, gt.shape)
    m = as_mask(mask, pred.shape[0])
    idx = np.flatnonzero(m)
    if idx.size < 2:
        raise ShapeError("va_loss", f"need >= 2 valid frames, got {idx.size}", pred.shape)
    pv = tz.gather(pred, idx, axis=0)
    total = None
    for d in range(2):
        col = tz.reshape(tz.slice_along(pv, 1, d, d + 1), (idx.size,))
        c = _ccc_1d(col, gt[idx, d])
        total = c if total is None else total + c
    return _const(1.0, pred.dtype) - tz.scale(total, 0.5)


def expr_loss(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean masked softmax cross-entropy (log-sum-exp stabilized)."""
    if logits.ndim != 2:
        raise ShapeError("expr_loss", "logits must be (T, n_classes)", logits.shape)
    n_classes = logits.shape[1]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ShapeError("expr_loss", "labels must be (T,)", logits.shape, labels.shape)
    m = as_mask(mask, logits.shape[0])
    idx = np.flatnonzero(m)
    if idx.size == 0:
        raise ShapeError("expr_loss", "no valid frames", logits.shape)
    lab = labels[idx]
    if lab.min() < 0 or lab.max() >= n_classes:
        raise ValueError(
            f"expr_loss: label out of range [0, {n_classes}) on a valid frame "
            f"(min {lab.min()}, max {lab.max()})")
    lv = tz.gather(logits, idx, axis=0)

    # log-sum-exp with a detached row-max shift; gradient is unaffected.
    shift = lv.data.max(axis=1, keepdims=True)
    z = lv - _const(np.broadcast_to(shift, lv.shape), lv.dtype)
    lse = tz.log(tz.reduce_sum(tz.exp(z), axis=1)) + _const(shift[:, 0], lv.dtype)
    onehot = np.zeros(lv.shape, dtype=lv.data.dtype)
    onehot[np.arange(idx.size), lab] = 1.0
    picked = tz.reduce_sum(lv * _const(onehot, lv.dtype), axis=1)
    return tz.reduce_mean(lse - picked)


def au_loss(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean masked binary cross-entropy on logits, in the stable fused form
    max(x, 0) - x*y + log(1 + exp(-|x|)).
    """
    if logits.ndim != 2:
        raise ShapeError("au_loss", "logits must be (T, n_units)", logits.shape)
    labels = np.asarray(labels)
    if labels.shape != logits.shape:
        raise ShapeError("au_loss", "labels shape mismatch", logits.shape, labels.shape)
    m = as_mask(mask, logits.shape[0])
    idx = np.flatnonzero(m)
    if idx.size == 0:
        raise ShapeError("au_loss", "no valid frames", logits.shape)
    y = labels[idx]
    if not np.isin(y, (0, 1)).all():
        raise ValueError("au_loss: labels must be binary on valid frames")
    x = tz.gather(logits, idx, axis=0)
    yc = _const(y, x.dtype)
    absx = tz.relu(x) + tz.relu(-x)
    soft = tz.log(tz.exp(-absx) + _const(1.0, x.dtype))
    return tz.reduce_mean(tz.relu(x) - x * yc + soft)
