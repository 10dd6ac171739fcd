"""Image encoder with parallel convolutional and transformer paths.

The CNN path is a standard downsampling pyramid. The transformer path embeds
the volume as non-overlapping patches at the deepest scale and runs pre-norm
attention blocks. Variants: ``cnn`` and ``vit`` use one path alone, ``hybrid``
fuses them by channelwise addition after a 1x1 projection at every scale
(the transformer grid is resampled to each pyramid resolution first).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import ConvBlock3d, _norm


class CnnPath(nn.Module):
    def __init__(self, base: int, depth: int):
        super().__init__()
        self.stem = ConvBlock3d(1, base)
        self.stages = nn.ModuleList(
            ConvBlock3d(base * 2**i, base * 2 ** (i + 1), stride=2, double=i > 0) for i in range(depth)
        )

    def forward(self, x) -> list[torch.Tensor]:
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio), nn.GELU(), nn.Linear(dim * mlp_ratio, dim)
        )

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class VitPath(nn.Module):
    def __init__(self, patch_size, depth: int, dim: int, blocks: int, heads: int):
        super().__init__()
        stride = 2**depth
        self.grid = tuple(s // stride for s in patch_size)
        n_tokens = self.grid[0] * self.grid[1] * self.grid[2]
        self.embed = nn.Conv3d(1, dim, kernel_size=stride, stride=stride)
        self.pos = nn.Parameter(torch.zeros(1, n_tokens, dim))
        nn.init.trunc_normal_(self.pos, std=0.02)
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads) for _ in range(blocks))

    def forward(self, x) -> torch.Tensor:
        t = self.embed(x)  # (1, dim, gz, gy, gx)
        t = t.flatten(2).transpose(1, 2) + self.pos
        for block in self.blocks:
            t = block(t)
        return t.transpose(1, 2).reshape(1, -1, *self.grid)


class ImageEncoder(nn.Module):
    """Multiscale features plus a neck projection to the interaction width."""

    def __init__(self, cfg):
        super().__init__()
        self.variant = cfg.encoder_variant
        self.depth = cfg.depth
        chans = [cfg.base_channels * 2**i for i in range(cfg.depth + 1)]
        if self.variant in ("cnn", "hybrid"):
            self.cnn = CnnPath(cfg.base_channels, cfg.depth)
        if self.variant in ("vit", "hybrid"):
            self.vit = VitPath(
                cfg.patch_size, cfg.depth, cfg.embed_dim, cfg.transformer_blocks, cfg.attention_heads
            )
            self.vit_proj = nn.ModuleList(nn.Conv3d(cfg.embed_dim, c, 1) for c in chans)
        self.neck = nn.Sequential(nn.Conv3d(chans[-1], cfg.embed_dim, 1), _norm(cfg.embed_dim))

    def _vit_pyramid(self, x, sizes) -> list[torch.Tensor]:
        deep = self.vit(x)
        out = []
        for proj, size in zip(self.vit_proj, sizes):
            up = deep if deep.shape[2:] == size else F.interpolate(deep, size=size, mode="trilinear", align_corners=False)
            out.append(proj(up))
        return out

    def forward(self, x: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        """x: (1, 1, D, H, W) -> (per-scale features, neck feature at the deepest scale)."""
        sizes = [tuple(s // 2**i for s in x.shape[2:]) for i in range(self.depth + 1)]
        if self.variant == "cnn":
            feats = self.cnn(x)
        elif self.variant == "vit":
            feats = self._vit_pyramid(x, sizes)
        else:
            cnn_feats = self.cnn(x)
            vit_feats = self._vit_pyramid(x, sizes)
            feats = [c + v for c, v in zip(cnn_feats, vit_feats)]
        return feats, self.neck(feats[-1])
