"""Two-way attention between prompt tokens and image features.

Each block runs token self-attention, token-to-image cross-attention, a token
MLP, then image-to-token cross-attention, all pre-norm with residuals. Image
positions carry a fixed Fourier encoding on the attention inputs so tokens can
address voxel locations.
"""

from __future__ import annotations

import torch
from torch import nn


class TwoWayBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.t2i = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.i2t = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_t1 = nn.LayerNorm(dim)
        self.norm_t2 = nn.LayerNorm(dim)
        self.norm_t3 = nn.LayerNorm(dim)
        self.norm_i1 = nn.LayerNorm(dim)
        self.norm_i2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * mlp_ratio), nn.ReLU(inplace=True), nn.Linear(dim * mlp_ratio, dim))

    def forward(self, tokens, image, image_pe):
        h = self.norm_t1(tokens)
        tokens = tokens + self.self_attn(h, h, h, need_weights=False)[0]
        q = self.norm_t2(tokens)
        kv = self.norm_i1(image) + image_pe
        tokens = tokens + self.t2i(q, kv, kv, need_weights=False)[0]
        tokens = tokens + self.mlp(self.norm_t3(tokens))
        q = self.norm_i2(image) + image_pe
        k = self.norm_t1(tokens)
        image = image + self.i2t(q, k, k, need_weights=False)[0]
        return tokens, image


class InteractionModule(nn.Module):
    """Produces the image embedding Z_x and visual embedding Z_v."""

    def __init__(self, cfg):
        super().__init__()
        self.blocks = nn.ModuleList(
            TwoWayBlock(cfg.embed_dim, cfg.attention_heads) for _ in range(cfg.interaction_blocks)
        )

    def forward(self, image_feature: torch.Tensor, tokens: torch.Tensor, image_pe: torch.Tensor):
        """image_feature/image_pe: (C, d, h, w); tokens: (T, C) -> (Z_x (C,d,h,w), Z_v (T,C))."""
        spatial = image_feature.shape[1:]
        img = image_feature.flatten(1).transpose(0, 1)[None]  # (1, S, C)
        pe = image_pe.flatten(1).transpose(0, 1)[None]
        tok = tokens[None]
        for block in self.blocks:
            tok, img = block(tok, img, pe)
        z_x = img[0].transpose(0, 1).reshape(-1, *spatial)
        return z_x, tok[0]
