"""Dice + BCE segmentation loss and IoU / F1 metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, Tensor, _sigmoid, add, div, make_op, mul, sigmoid, sub, tmean, tsum


@dataclass
class LossConfig:
    lambda_dice: float = 1.0
    lambda_bce: float = 1.0
    smooth: float = 1.0
    threshold: float = 0.5

    def __post_init__(self):
        if self.lambda_dice < 0 or self.lambda_bce < 0:
            raise ValueError("loss weights must be non-negative")
        if self.smooth <= 0:
            raise ValueError("smooth must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


def _check(logits: Tensor, y) -> np.ndarray:
    target = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    if logits.shape != target.shape:
        raise DimensionError(f"logits {logits.shape} vs target {target.shape}")
    return target


def dice_loss(logits: Tensor, y, smooth: float = 1.0) -> Tensor:
    """1 - (2 sum(p y) + eps) / (sum p + sum y + eps), per sample, averaged over the batch."""
    target = _check(logits, y)
    n = logits.shape[0]
    p = sigmoid(logits).reshape(n, -1)
    t = Tensor(target.reshape(n, -1))
    inter = tsum(mul(p, t), axis=1)
    denom = add(tsum(p, axis=1), t.data.sum(axis=1) + smooth)
    score = div(add(mul(inter, 2.0), smooth), denom)
    return tmean(sub(1.0, score))


def bce_loss(logits: Tensor, y) -> Tensor:
    """Mean of max(z, 0) - z y + log(1 + exp(-|z|))."""
    target = _check(logits, y)
    z = logits.data
    vals = np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))
    m = z.size

    def bw(g):
        return (g * (_sigmoid(z) - target) / m,)

    return make_op(np.array([vals.mean()]), (logits,), bw, "bce_loss")


def total_loss(logits: Tensor, y, cfg: LossConfig | None = None) -> Tensor:
    cfg = cfg or LossConfig()
    if cfg.lambda_bce == 0:
        return mul(dice_loss(logits, y, cfg.smooth), cfg.lambda_dice)
    if cfg.lambda_dice == 0:
        return mul(bce_loss(logits, y), cfg.lambda_bce)
    return add(mul(dice_loss(logits, y, cfg.smooth), cfg.lambda_dice), mul(bce_loss(logits, y), cfg.lambda_bce))


def binarize(logits, threshold: float = 0.5) -> np.ndarray:
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    return _sigmoid(z) >= threshold


def iou(pred, y) -> float:
    p, t = np.asarray(pred, dtype=bool), np.asarray(y, dtype=bool)
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union


def f1(pred, y) -> float:
    p, t = np.asarray(pred, dtype=bool), np.asarray(y, dtype=bool)
    total = np.count_nonzero(p) + np.count_nonzero(t)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & t) / total
