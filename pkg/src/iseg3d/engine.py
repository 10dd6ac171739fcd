"""The interactive episode loop shared by training and evaluation.

One episode = one case driven through N prompt -> predict -> correct
iterations. Image features are encoded once per episode. Iteration 1 gets a
single positive fallback point (plus the fixed box when the variant allows);
later iterations sample fresh points and scribbles from the error regions of
the previous refined prediction. The dense prompt fed forward is the selected
candidate map, which keeps its gradient during training; the corrective
network's refined output is what gets thresholded for error regions and
metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .grids import (
    BinaryMask,
    LogitMap,
    Volume,
    augment_intensity_shift,
    augment_zoom,
    clip_intensities,
    crop_patch,
    foreground_mask,
    read_grid,
    zscore_normalize,
)
from .losses import LossWeights, confidence_loss, corrective_loss
from .metrics import dice_score, nsd_score
from .model.network import EpisodeCache, PromptableSegmenter
from .prompts import (
    PromptState,
    Scribble,
    ScribbleConfig,
    error_regions,
    generate_scribbles,
    ground_truth_bbox,
    perturb_bbox,
    sample_points,
)
from .variants import VariantConfig, resolve_variant


@dataclass
class IterationRecord:
    iteration: int
    points: list
    scribbles: list
    scores: list[float]
    selected_index: int
    dice: float
    nsd: float | None = None
    con_loss: float | None = None
    cor_loss: float | None = None

    @property
    def point_count(self) -> int:
        return len(self.points)

    @property
    def scribble_voxel_count(self) -> int:
        return int(sum(len(s.voxels) for s in self.scribbles))


@dataclass
class EpisodeResult:
    records: list[IterationRecord]
    final_logits: np.ndarray
    loss: torch.Tensor | None = None
    final_state: PromptState | None = None
    loss_terms: list[tuple[torch.Tensor, torch.Tensor]] | None = None  # (L_con_i, L_cor_i), train only

    @property
    def final_dice(self) -> float:
        return self.records[-1].dice


def _empty_like(gt: BinaryMask) -> BinaryMask:
    return BinaryMask(np.zeros(gt.shape, dtype=np.uint8))


def load_case_entry(entry) -> tuple[Volume, BinaryMask]:
    volume = read_grid(entry.image_path)
    label = read_grid(entry.label_path)
    if not isinstance(volume, Volume) or not isinstance(label, BinaryMask):
        raise ValueError(f"case {entry.case_id}: expected a volume/mask VGRID pair")
    return volume, label


def prepare_case(
    volume: Volume,
    gt: BinaryMask,
    patch_size,
    rng: np.random.Generator,
    augment: bool = False,
    zoom_range=(0.85, 1.15),
    shift_range=(-0.1, 0.1),
) -> tuple[np.ndarray, np.ndarray, tuple[int, int, int]]:
    """Clip, normalize, optionally augment, and crop a foreground-centered patch."""
    fg = foreground_mask(volume)
    v = zscore_normalize(clip_intensities(volume, fg), fg)
    y = gt
    if augment:
        vz, yz = augment_zoom(v, y, zoom_range, rng)
        if yz.data.any():  # a magnifying zoom can push a border lesion out of frame
            v, y = vz, yz
        v = augment_intensity_shift(v, shift_range, rng)
    patch_v, patch_y, offset = crop_patch(v, y, patch_size, rng)
    return patch_v.data, patch_y.data, offset


def episode_box(gt: BinaryMask, variant: VariantConfig, box_mode: str = "tight"):
    if not variant.use_box:
        return None
    box = ground_truth_bbox(gt)
    if box_mode == "tight":
        return box
    if box_mode == "erode5":
        return perturb_bbox(box, 5, "erode", gt.shape)
    if box_mode == "dilate5":
        return perturb_bbox(box, 5, "dilate", gt.shape)
    raise ValueError(f"unknown box mode {box_mode!r}")


def run_episode(
    model: PromptableSegmenter,
    volume_np: np.ndarray,
    gt_np: np.ndarray,
    *,
    variant: VariantConfig | str,
    rng: np.random.Generator,
    iterations: int,
    train: bool = False,
    weights: LossWeights | None = None,
    test_points: int | None = None,
    box_mode: str = "tight",
    scribbles_enabled: bool | None = None,
    scribble_cfg: ScribbleConfig | None = None,
    cache: EpisodeCache | None = None,
    case_id: str = "case",
    compute_nsd: bool = False,
    tau: float = 1.0,
    spacing=(1.0, 1.0, 1.0),
    detach_dense: bool = False,
    detach_every: int = 0,
) -> EpisodeResult:
    variant = resolve_variant(variant)
    if iterations < 1:
        raise ValueError("need at least one iteration")
    weights = weights or LossWeights()
    gt = BinaryMask(gt_np)
    gt_t = torch.from_numpy(gt.data.astype(np.float32))
    vol_t = torch.from_numpy(np.asarray(volume_np, dtype=np.float32))

    if scribbles_enabled is None:
        scribbles_enabled = variant.use_scribbles_train if train else variant.use_scribbles_test
    if not train and test_points is None:
        test_points = variant.test_points
        if test_points is None:
            raise ValueError(f"variant {variant.name!r} varies its test point count; pass test_points")

    encoded = cache.encode(case_id, vol_t) if cache is not None else model.encode_image(vol_t, case_id)
    box = episode_box(gt, variant, box_mode)

    empty = _empty_like(gt)
    first_points = sample_points(empty, empty, 1, rng, gt=gt)  # fallback rule: 1 positive GT point
    state = PromptState.initial(gt.shape, first_points, scribbles=(), box=box)

    dense: torch.Tensor | None = None
    records: list[IterationRecord] = []
    per_iter_losses = []
    refined = None

    for i in range(1, iterations + 1):
        outputs = model.forward_iteration(encoded, state, dense_override=dense)
        refined = model.refine(
            vol_t,
            outputs.selected_map,
            torch.from_numpy(state.cumulative_positive.data),
            torch.from_numpy(state.cumulative_negative.data),
        )
        if train:
            l_con = confidence_loss(outputs, gt_t, weights)
            l_cor = corrective_loss(refined, gt_t, weights)
            per_iter_losses.append((l_con, l_cor))

        pred = BinaryMask((refined.detach().numpy() > 0).astype(np.uint8))
        rec = IterationRecord(
            iteration=i,
            points=list(state.points),
            scribbles=list(state.scribbles),
            scores=[float(s) for s in outputs.scores.detach()],
            selected_index=outputs.selected_index,
            dice=dice_score(pred, gt),
            nsd=nsd_score(pred, gt, tau=tau, spacing=spacing) if compute_nsd else None,
            con_loss=float(per_iter_losses[-1][0].detach()) if train else None,
            cor_loss=float(per_iter_losses[-1][1].detach()) if train else None,
        )
        records.append(rec)

        if i < iterations:
            fn, fp = error_regions(pred, gt)
            if train:
                k = int(rng.integers(variant.train_points[0], variant.train_points[1] + 1))
            else:
                k = int(test_points)
            points = sample_points(fn, fp, k, rng, gt=gt)
            scribbles: list[Scribble] = []
            if scribbles_enabled:
                scribbles = generate_scribbles(fn, fp, gt, rng, scribble_cfg)
            dense = outputs.selected_map
            truncate = detach_every > 0 and i % detach_every == 0  # memory knob
            if detach_dense or truncate or not train:
                dense = dense.detach()
            state = state.advance(
                points, scribbles, previous_logits=LogitMap(dense.detach().numpy())
            )

    loss = None
    if train:
        from .losses import total_loss

        loss = total_loss(per_iter_losses)
    return EpisodeResult(
        records=records,
        final_logits=refined.detach().numpy(),
        loss=loss,
        final_state=state,
        loss_terms=per_iter_losses if train else None,
    )
