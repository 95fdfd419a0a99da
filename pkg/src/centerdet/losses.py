"""Classification and regression losses shared by both detector families.

All functions take and return torch tensors and are differentiable; gradient
correctness is pinned by finite-difference tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F


def smooth_l1(pred: torch.Tensor, target: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Smooth L1 (Huber-style) loss, summed over all elements.

    Elementwise 0.5*d^2/beta for |d| < beta, |d| - 0.5*beta otherwise; the two
    branches meet with matching value and slope at |d| = beta.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    d = torch.abs(pred - target)
    loss = torch.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return loss.sum()


def focal_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    alpha: Optional[float] = 0.25,
    gamma: float = 2.0,
    normalizer: Optional[float] = None,
) -> torch.Tensor:
    """Sigmoid focal loss over per-class binary targets.

    -alpha_t * (1 - p_t)^gamma * log(p_t), summed over every logit and divided
    by ``normalizer`` (defaults to the number of positive targets, floored at
    one). ``alpha=None`` disables the alpha balance; gamma=0 then reduces the
    loss to plain binary cross-entropy.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    targets = targets.to(logits.dtype)
    # log(p_t) and (1 - p_t) via logsigmoid keep the loss stable at large |x|
    log_pt = F.logsigmoid(logits) * targets + F.logsigmoid(-logits) * (1 - targets)
    one_minus_pt = torch.sigmoid(-logits) * targets + torch.sigmoid(logits) * (1 - targets)
    loss = -(one_minus_pt**gamma) * log_pt
    if alpha is not None:
        loss = (alpha * targets + (1 - alpha) * (1 - targets)) * loss
    if normalizer is None:
        normalizer = float(max(targets.sum().item(), 1.0))
    return loss.sum() / normalizer


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Multiclass log-loss over (N, K) logits and (N,) integer labels, averaged.

    Returns 0 for an empty batch.
    """
    if logits.shape[0] == 0:
        return logits.sum() * 0.0
    return F.cross_entropy(logits, labels, reduction="mean")


@dataclass
class LossBundle:
    """Named loss terms plus per-term weights; total is the weighted sum."""

    terms: dict[str, torch.Tensor]
    weights: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> torch.Tensor:
        out = None
        for name, value in self.terms.items():
            w = self.weights.get(name, 1.0)
            out = w * value if out is None else out + w * value
        if out is None:
            raise ValueError("empty loss bundle")
        return out

    @property
    def finite(self) -> bool:
        return all(torch.isfinite(v).all().item() for v in self.terms.values())

    def detached_floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.terms.items()}
