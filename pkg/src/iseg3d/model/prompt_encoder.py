"""Sparse and dense prompt encoding.

Points, box corners and subsampled scribble voxels become tokens: a Fourier
positional encoding of the normalized voxel coordinate plus a learned type
embedding. The dense prompt (previous-iteration logits) is resampled to the
deep feature grid and convolutionally embedded; a learned no-mask embedding
substitutes at iteration 1. The same Fourier mapping also provides positional
encodings for image locations so tokens and voxels share one coordinate space.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..prompts import POSITIVE, PromptState

TYPE_POINT_NEG = 0
TYPE_POINT_POS = 1
TYPE_BOX_MIN = 2
TYPE_BOX_MAX = 3
TYPE_SCRIBBLE_NEG = 4
TYPE_SCRIBBLE_POS = 5
TYPE_PAD = 6


def subsample_scribble(voxels: np.ndarray, limit: int) -> np.ndarray:
    """Deterministic <=limit voxel subset: lexicographic sort, evenly spaced picks."""
    order = np.lexsort((voxels[:, 2], voxels[:, 1], voxels[:, 0]))
    ordered = voxels[order]
    if len(ordered) <= limit:
        return ordered
    idx = np.unique(np.linspace(0, len(ordered) - 1, limit).round().astype(int))
    return ordered[idx]


class FourierPositionEncoding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ValueError("positional encoding dim must be even")
        self.register_buffer("freq", torch.randn(3, dim // 2))

    def forward(self, coords01: torch.Tensor) -> torch.Tensor:
        """coords01: (..., 3) in [0, 1] -> (..., dim)."""
        proj = 2.0 * math.pi * coords01 @ self.freq
        return torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)

    def grid(self, shape) -> torch.Tensor:
        """(dim, *shape) encoding of voxel centers, for image positions."""
        axes = [(torch.arange(s, dtype=torch.float32) + 0.5) / s for s in shape]
        zz, yy, xx = torch.meshgrid(*axes, indexing="ij")
        coords = torch.stack([zz, yy, xx], dim=-1).to(self.freq.device)
        return self.forward(coords).permute(3, 0, 1, 2)


class PromptEncoder(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.patch_size = cfg.patch_size
        self.deep_grid = tuple(s // 2**cfg.depth for s in cfg.patch_size)
        self.scribble_token_limit = cfg.scribble_token_limit
        self.scribble_tokens = cfg.scribble_tokens
        self.pe = FourierPositionEncoding(cfg.embed_dim)
        self.type_embed = nn.Embedding(7, cfg.embed_dim)
        self.no_mask_embed = nn.Embedding(1, cfg.embed_dim)
        hidden = max(cfg.embed_dim // 4, 4)
        self.dense_embed = nn.Sequential(
            nn.Conv3d(1, hidden, 3, padding=1),
            nn.GELU(),
            nn.Conv3d(hidden, cfg.embed_dim, 1),
        )

    def _coord_token(self, coord, type_idx: int) -> torch.Tensor:
        c = torch.tensor(
            [(float(v) + 0.5) / s for v, s in zip(coord, self.patch_size)],
            dtype=torch.float32,
            device=self.type_embed.weight.device,
        )
        return self.pe(c) + self.type_embed.weight[type_idx]

    def sparse_tokens(self, state: PromptState) -> torch.Tensor:
        """(T, embed_dim); a single learned padding token when no sparse prompt exists."""
        tokens = []
        for pt in state.points:
            kind = TYPE_POINT_POS if pt.label == POSITIVE else TYPE_POINT_NEG
            tokens.append(self._coord_token(pt.coord, kind))
        if state.box is not None:
            tokens.append(self._coord_token(state.box.min_corner, TYPE_BOX_MIN))
            tokens.append(self._coord_token(state.box.max_corner, TYPE_BOX_MAX))
        if self.scribble_tokens:
            for sc in state.scribbles:
                kind = TYPE_SCRIBBLE_POS if sc.label == POSITIVE else TYPE_SCRIBBLE_NEG
                for coord in subsample_scribble(sc.voxels, self.scribble_token_limit):
                    tokens.append(self._coord_token(coord, kind))
        if not tokens:
            tokens.append(self.type_embed.weight[TYPE_PAD])
        return torch.stack(tokens)

    def dense_embedding(self, previous_logits: torch.Tensor | None) -> torch.Tensor:
        """(embed_dim, *deep_grid); the no-mask embedding when logits are absent."""
        if previous_logits is None:
            return self.no_mask_embed.weight[0].reshape(-1, 1, 1, 1).expand(-1, *self.deep_grid)
        x = previous_logits[None, None]
        if x.shape[2:] != self.deep_grid:
            x = F.interpolate(x, size=self.deep_grid, mode="trilinear", align_corners=False)
        return self.dense_embed(x)[0]

    def forward(self, state: PromptState, dense_override: torch.Tensor | None = None):
        prev = dense_override
        if prev is None and state.previous_logits is not None:
            raw = state.previous_logits
            prev = raw if isinstance(raw, torch.Tensor) else torch.from_numpy(np.asarray(raw.data, dtype=np.float32))
        return self.sparse_tokens(state), self.dense_embedding(prev)
