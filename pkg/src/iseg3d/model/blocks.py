"""Small reusable 3D conv / MLP building blocks."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def _norm(channels: int) -> nn.Module:
    return nn.GroupNorm(min(4, channels), channels)


class FastConv3d(nn.Module):
    """3x3x3 convolution evaluated as one batched 2D convolution.

    The z-offset slabs are folded into the channel dimension, so a single
    conv2d call does the whole thing; this build's native conv3d takes an
    unvectorized fallback that is ~4x slower including backward. Weight layout
    matches nn.Conv3d. Only batch size 1 occurs in this model.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, 3, 3, 3))
        self.bias = nn.Parameter(torch.empty(out_ch)) if bias else None
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        if self.bias is not None:
            bound = 1.0 / math.sqrt(in_ch * 27)
            nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[0] != 1:
            raise ValueError("FastConv3d handles batch size 1 only")
        _, c, d, h, w = x.shape
        slabs = F.pad(x[0].permute(1, 0, 2, 3), (0, 0, 0, 0, 0, 0, 1, 1))
        win = slabs.unfold(0, 3, self.stride)  # (d_out, C, H, W, 3)
        win = win.permute(0, 4, 1, 2, 3).reshape(win.shape[0], 3 * c, h, w)
        w2 = self.weight.permute(0, 2, 1, 3, 4).reshape(self.weight.shape[0], 3 * c, 3, 3)
        y = F.conv2d(win, w2, self.bias, stride=self.stride, padding=1)
        return y.permute(1, 0, 2, 3)[None]


class ConvBlock3d(nn.Module):
    """conv-norm-act, optionally twice; stride on the first conv downsamples.

    Single-conv blocks keep full-resolution stages affordable on CPU; the
    deeper, cheaper stages use double=True.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, double: bool = False):
        super().__init__()
        layers = [FastConv3d(in_ch, out_ch, stride=stride), _norm(out_ch), nn.ReLU(inplace=True)]
        if double:
            layers += [FastConv3d(out_ch, out_ch), _norm(out_ch), nn.ReLU(inplace=True)]
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class ResidualBlock3d(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            FastConv3d(channels, channels),
            _norm(channels),
            nn.ReLU(inplace=True),
            FastConv3d(channels, channels),
            _norm(channels),
        )
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(x + self.body(x))


class Mlp(nn.Module):
    # GELU keeps every unit trainable at the tiny per-episode batch sizes the
    # confidence heads see (a ReLU here goes dead on single pooled vectors)
    def __init__(self, dims: list[int]):
        super().__init__()
        layers: list[nn.Module] = []
        for i in range(len(dims) - 1):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                layers.append(nn.GELU())
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)
