"""
Dice and Dice + cross-entropy losses with their gradients w.r.t. the
predicted probabilities.
"""

from __future__ import annotations

import numpy as np

DICE_EPS = 1e-6
CE_CLAMP = 1e-7


def _check(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs truth {g.shape}")
    return p, g


def dice_loss(pred: np.ndarray, truth: np.ndarray, eps: float = DICE_EPS) -> float:
    """1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), over the whole batch."""
    p, g = _check(pred, truth)
    inter = float((p * g).sum())
    total = float(p.sum() + g.sum())
    return 1.0 - (2.0 * inter + eps) / (total + eps)


def dice_grad(pred: np.ndarray, truth: np.ndarray, eps: float = DICE_EPS) -> np.ndarray:
    p, g = _check(pred, truth)
    inter = float((p * g).sum())
    total = float(p.sum() + g.sum()) + eps
    return -(2.0 * g * total - (2.0 * inter + eps)) / (total * total)


def bce(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p, g = _check(pred, truth)
    pc = np.clip(p, CE_CLAMP, 1.0 - CE_CLAMP)
    return float(-(g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc)).mean())


def bce_grad(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    p, g = _check(pred, truth)
    inside = (p >= CE_CLAMP) & (p <= 1.0 - CE_CLAMP)
    pc = np.clip(p, CE_CLAMP, 1.0 - CE_CLAMP)
    grad = (-(g / pc) + (1.0 - g) / (1.0 - pc)) / p.size
    return np.where(inside, grad, 0.0)


def combined_loss(pred: np.ndarray, truth: np.ndarray, ce_weight: float = 0.3) -> float:
    if ce_weight < 0:
        raise ValueError(f"ce_weight must be >= 0, got {ce_weight}")
    loss = dice_loss(pred, truth)
    if ce_weight:
        loss += ce_weight * bce(pred, truth)
    return loss


def combined_loss_and_grad(
    pred: np.ndarray, truth: np.ndarray, ce_weight: float = 0.3
) -> tuple[float, np.ndarray]:
    loss = combined_loss(pred, truth, ce_weight)
    grad = dice_grad(pred, truth)
    if ce_weight:
        grad = grad + ce_weight * bce_grad(pred, truth)
    return loss, grad
