"""Shallow corrective refinement network.

Relabels voxels of the selected candidate using the raw image and the
cumulative positive/negative click maps. Input is the 4-channel stack
(image, selected binary mask, cumulative positive, cumulative negative) at
full patch resolution; the net works at a downsampled resolution for
efficiency: two cascaded residual blocks, then two parallel single-conv
branches summed, then upsampling back. Its loss never reaches the main
network (the selected mask is binarized from detached logits).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import FastConv3d, ResidualBlock3d, _norm


class CorrectiveRefiner(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        ch = cfg.corrective_channels
        self.factor = cfg.corrective_downsample
        self.entry = nn.Sequential(FastConv3d(4, ch), _norm(ch), nn.ReLU(inplace=True))
        self.res1 = ResidualBlock3d(ch)
        self.res2 = ResidualBlock3d(ch)
        self.branch_a = FastConv3d(ch, 1)
        self.branch_b = FastConv3d(ch, 1)

    def forward(self, x_c: torch.Tensor) -> torch.Tensor:
        """x_c: (4, D, H, W) -> refined logits (D, H, W)."""
        if x_c.ndim != 4 or x_c.shape[0] != 4:
            raise ValueError(f"corrective input must have 4 channels, got {tuple(x_c.shape)}")
        full = x_c.shape[1:]
        x = x_c[None]
        if self.factor > 1:
            small = tuple(max(1, s // self.factor) for s in full)
            x = F.interpolate(x, size=small, mode="trilinear", align_corners=False)
        h = self.res2(self.res1(self.entry(x)))
        out = self.branch_a(h) + self.branch_b(h)
        if out.shape[2:] != full:
            out = F.interpolate(out, size=full, mode="trilinear", align_corners=False)
        return out[0, 0]
