"""Supervision terms: structural (Dice + CE), boundary, confidence regression.

All functions take logits by default and apply the sigmoid internally; pass
``apply_sigmoid=False`` for inputs that are already probabilities or binary.
Weights default to the 1 : 10 : 1 structural : boundary : regression ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .grids import ShapeMismatchError


@dataclass
class LossWeights:
    structural: float = 1.0
    boundary: float = 10.0
    regression: float = 1.0

    def __post_init__(self):
        if min(self.structural, self.boundary, self.regression) <= 0:
            raise ValueError("loss weights must be positive")


def _check_pair(m: torch.Tensor, y: torch.Tensor) -> None:
    if m.shape != y.shape:
        raise ShapeMismatchError(f"shape mismatch: {tuple(m.shape)} vs {tuple(y.shape)}")


def _probs(m: torch.Tensor, apply_sigmoid: bool) -> torch.Tensor:
    return torch.sigmoid(m) if apply_sigmoid else m


def dice_loss(m: torch.Tensor, y: torch.Tensor, smooth: float = 1e-5, apply_sigmoid: bool = True) -> torch.Tensor:
    _check_pair(m, y)
    p = _probs(m, apply_sigmoid)
    y = y.to(p.dtype)
    inter = (p * y).sum()
    return 1.0 - (2.0 * inter + smooth) / (p.sum() + y.sum() + smooth)


def ce_loss(m: torch.Tensor, y: torch.Tensor, apply_sigmoid: bool = True) -> torch.Tensor:
    _check_pair(m, y)
    y = y.to(m.dtype)
    if apply_sigmoid:
        return F.binary_cross_entropy_with_logits(m, y)
    return F.binary_cross_entropy(m, y)


def structural_loss(m: torch.Tensor, y: torch.Tensor, apply_sigmoid: bool = True) -> torch.Tensor:
    return dice_loss(m, y, apply_sigmoid=apply_sigmoid) + ce_loss(m, y, apply_sigmoid=apply_sigmoid)


def boundary_map(m: torch.Tensor, apply_sigmoid: bool = False) -> torch.Tensor:
    """|m - avg_pool3x3x3(m)|, stride 1.

    Border windows average over the in-bounds neighborhood only, so constant
    maps have an identically zero boundary everywhere (including the border).
    """
    p = _probs(m, apply_sigmoid)
    pooled = F.avg_pool3d(p[None, None], kernel_size=3, stride=1, padding=1, count_include_pad=False)[0, 0]
    return (p - pooled).abs()


def boundary_loss(m: torch.Tensor, y: torch.Tensor, apply_sigmoid: bool = True) -> torch.Tensor:
    _check_pair(m, y)
    bm = boundary_map(m, apply_sigmoid=apply_sigmoid)
    by = boundary_map(y.to(bm.dtype), apply_sigmoid=False)
    return F.mse_loss(bm, by)


def regression_loss(s: torch.Tensor, m: torch.Tensor, y: torch.Tensor, apply_sigmoid: bool = True) -> torch.Tensor:
    """Squared error between a confidence score and the (detached) soft Dice of its map."""
    target = (1.0 - dice_loss(m, y, apply_sigmoid=apply_sigmoid)).detach()
    s = s.reshape(())
    return (s - target.to(s.dtype)) ** 2


def confidence_loss(outputs, y: torch.Tensor, w: LossWeights | None = None) -> torch.Tensor:
    """Weighted structural + boundary + regression terms, summed over all heads."""
    w = w or LossWeights()
    total = None
    for m_j, s_j in zip(outputs.maps, outputs.scores):
        term = (
            w.structural * structural_loss(m_j, y)
            + w.boundary * boundary_loss(m_j, y)
            + w.regression * regression_loss(s_j, m_j, y)
        )
        total = term if total is None else total + term
    return total


def corrective_loss(refined: torch.Tensor, y: torch.Tensor, w: LossWeights | None = None) -> torch.Tensor:
    w = w or LossWeights()
    return w.structural * structural_loss(refined, y) + w.boundary * boundary_loss(refined, y)


def total_loss(per_iteration) -> torch.Tensor:
    """Sum of (confidence, corrective) pairs across iterations."""
    acc = None
    for l_con, l_cor in per_iteration:
        term = l_con + l_cor
        acc = term if acc is None else acc + term
    if acc is None:
        raise ValueError("need at least one iteration")
    return acc
