"""Full promptable segmentation graph and its checkpoint format.

One forward iteration: encode prompts, run two-way interaction against the
(cached) image features, decode to a full-resolution feature map, and emit M
candidate logit maps with confidence scores. The candidate with the highest
score is the dense prompt for the next iteration and, binarized and detached,
one input channel of the corrective refinement network that produces the
iteration's final segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..prompts import PromptState
from .blocks import ConvBlock3d, Mlp
from .corrective import CorrectiveRefiner
from .encoder import ImageEncoder
from .interaction import InteractionModule
from .prompt_encoder import PromptEncoder

CHECKPOINT_FORMAT = "iseg3d-checkpoint"
CHECKPOINT_VERSION = 1

ENCODER_VARIANTS = ("cnn", "vit", "hybrid")


@dataclass
class ModelConfig:
    patch_size: tuple[int, int, int] = (32, 32, 32)
    base_channels: int = 8
    depth: int = 3
    embed_dim: int = 128
    attention_heads: int = 4
    transformer_blocks: int = 2
    interaction_blocks: int = 2
    mask_heads: int = 3
    corrective_downsample: int = 2
    corrective_channels: int = 8
    encoder_variant: str = "hybrid"
    scribble_token_limit: int = 16
    scribble_tokens: bool = True

    def __post_init__(self):
        self.patch_size = tuple(int(s) for s in self.patch_size)
        stride = 2**self.depth
        if any(s % stride for s in self.patch_size):
            raise ValueError(f"patch size {self.patch_size} not divisible by 2^depth={stride}")
        if self.mask_heads < 2:
            raise ValueError("need at least 2 candidate heads")
        if self.embed_dim % (2 * self.attention_heads):
            raise ValueError("embed_dim must be divisible by 2 * attention_heads")
        if self.encoder_variant not in ENCODER_VARIANTS:
            raise ValueError(f"encoder_variant must be one of {ENCODER_VARIANTS}")


@dataclass
class NetworkOutput:
    maps: torch.Tensor  # (M, D, H, W) candidate logits
    scores: torch.Tensor  # (M,)
    selected_index: int
    decoder_feature: torch.Tensor

    @property
    def selected_map(self) -> torch.Tensor:
        return self.maps[self.selected_index]


def select_best(scores) -> int:
    """First-index argmax over confidence scores."""
    if isinstance(scores, torch.Tensor):
        scores = scores.detach()
    values = [float(s) for s in scores]
    return values.index(max(values))


@dataclass
class EncodedImage:
    case_id: str
    skips: list[torch.Tensor]
    feature: torch.Tensor


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        chans = [cfg.base_channels * 2**i for i in range(cfg.depth + 1)]
        self.entry = nn.Conv3d(cfg.embed_dim, chans[-1], 1)
        self.ups = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for level in range(cfg.depth, 0, -1):
            self.ups.append(nn.ConvTranspose3d(chans[level], chans[level - 1], 2, stride=2))
            self.blocks.append(ConvBlock3d(2 * chans[level - 1], chans[level - 1]))

    def forward(self, z_x: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        x = self.entry(z_x[None])
        for i, (up, block) in enumerate(zip(self.ups, self.blocks)):
            skip = skips[len(skips) - 2 - i]
            x = block(torch.cat([up(x), skip], dim=1))
        return x[0]


class MaskHeads(nn.Module):
    """Per-head hypernetwork MLPs: a map weight vector and a confidence scalar."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c_d = cfg.base_channels
        self.map_mlps = nn.ModuleList(
            Mlp([cfg.embed_dim, cfg.embed_dim, c_d]) for _ in range(cfg.mask_heads)
        )
        self.score_mlps = nn.ModuleList(
            Mlp([cfg.embed_dim, cfg.embed_dim // 2, 1]) for _ in range(cfg.mask_heads)
        )

    def forward(self, f_d: torch.Tensor, z_v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pooled = z_v.mean(dim=0)
        maps = torch.stack([torch.einsum("c,cdhw->dhw", mlp(pooled), f_d) for mlp in self.map_mlps])
        scores = torch.stack([mlp(pooled).reshape(()) for mlp in self.score_mlps])
        return maps, scores


class PromptableSegmenter(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.image_encoder = ImageEncoder(cfg)
        self.prompt_encoder = PromptEncoder(cfg)
        self.interaction = InteractionModule(cfg)
        self.decoder = Decoder(cfg)
        self.heads = MaskHeads(cfg)
        self.corrective = CorrectiveRefiner(cfg)
        self.encode_calls = 0  # instrumentation: image encodings performed
        deep = tuple(s // 2**cfg.depth for s in cfg.patch_size)
        self.register_buffer("image_pe", self.prompt_encoder.pe.grid(deep))

    # -- parameter partitions -------------------------------------------------

    def main_parameters(self):
        return (p for name, p in self.named_parameters() if not name.startswith("corrective."))

    def corrective_parameters(self):
        return self.corrective.parameters()

    def corrective_param_fraction(self) -> float:
        cor = sum(p.numel() for p in self.corrective_parameters())
        main = sum(p.numel() for p in self.main_parameters())
        return cor / main

    # -- forward pieces --------------------------------------------------------

    def encode_image(self, volume: torch.Tensor, case_id: str = "") -> EncodedImage:
        if tuple(volume.shape) != self.cfg.patch_size:
            raise ValueError(f"volume shape {tuple(volume.shape)} != patch size {self.cfg.patch_size}")
        self.encode_calls += 1
        skips, feature = self.image_encoder(volume[None, None])
        return EncodedImage(case_id=case_id, skips=skips, feature=feature[0])

    def forward_iteration(
        self,
        encoded: EncodedImage,
        state: PromptState,
        dense_override: torch.Tensor | None = None,
    ) -> NetworkOutput:
        tokens, dense = self.prompt_encoder(state, dense_override)
        image = encoded.feature + dense
        z_x, z_v = self.interaction(image, tokens, self.image_pe)
        f_d = self.decoder(z_x, encoded.skips)
        maps, scores = self.heads(f_d, z_v)
        return NetworkOutput(maps=maps, scores=scores, selected_index=select_best(scores), decoder_feature=f_d)

    def refine(
        self,
        volume: torch.Tensor,
        selected_map: torch.Tensor,
        cumulative_positive: torch.Tensor,
        cumulative_negative: torch.Tensor,
    ) -> torch.Tensor:
        """Corrective pass; the candidate map is binarized from detached logits."""
        binary = (selected_map.detach() > 0).to(volume.dtype)
        x_c = torch.stack([volume, binary, cumulative_positive.to(volume.dtype), cumulative_negative.to(volume.dtype)])
        return self.corrective(x_c)


class EpisodeCache:
    """Per-episode image feature cache keyed on case id.

    The image features are generated once at the first iteration of an episode
    and reused afterwards; the cache enforces that and counts real encodes.
    """

    def __init__(self, model: PromptableSegmenter):
        self.model = model
        self._store: dict[str, EncodedImage] = {}
        self.encode_calls = 0

    def encode(self, case_id: str, volume: torch.Tensor) -> EncodedImage:
        if case_id not in self._store:
            self._store[case_id] = self.model.encode_image(volume, case_id)
            self.encode_calls += 1
        return self._store[case_id]

    def drop(self, case_id: str) -> None:
        self._store.pop(case_id, None)


def build_model(cfg: ModelConfig | None = None, seed: int = 0) -> PromptableSegmenter:
    """Seeded construction so weight init is reproducible."""
    cfg = cfg or ModelConfig()
    torch.manual_seed(seed)
    return PromptableSegmenter(cfg)


def save_checkpoint(model: PromptableSegmenter, path, optimizer=None, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[PromptableSegmenter, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    cfg = ModelConfig(**payload["config"])
    model = PromptableSegmenter(cfg)
    model.load_state_dict(payload["state_dict"])
    return model, payload
