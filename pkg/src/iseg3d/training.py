"""Iterative human-in-loop training: schedule, episode loop, checkpointing.

The optimizer is AdamW with the paper-style linear learning-rate decay
(4e-5 minus 2e-6 per epoch) clamped at a floor, one step per batch of
episodes, full backprop across all N iterations of an episode. Validation
runs the simulated user on the val split after every epoch and the best
checkpoint is kept. Training logs are JSON lines; with fixed seeds two runs
produce byte-identical logs, and resuming from the last checkpoint continues
them exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np
import torch

from .engine import EpisodeResult, load_case_entry, prepare_case, run_episode
from .losses import LossWeights
from .model.network import (
    EpisodeCache,
    ModelConfig,
    PromptableSegmenter,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .prompts import ScribbleConfig
from .synthdata import CaseManifest
from .variants import VariantConfig, resolve_variant


class TrainingDivergedError(RuntimeError):
    """Raised when an episode produced a non-finite loss; diagnostics attached."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    iterations: int = 11
    train_points: tuple[int, int] | None = None  # None: use the variant preset's range
    batch_size: int = 2
    epochs: int = 200
    lr0: float = 4e-5
    lr_decrement: float = 2e-6
    lr_floor: float = 1e-6
    weight_decay: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    variant: str = "basic"
    seed: int = 0
    augment: bool = True
    zoom_range: tuple[float, float] = (0.85, 1.15)
    shift_range: tuple[float, float] = (-0.1, 0.1)
    model: ModelConfig = field(default_factory=ModelConfig)
    val_test_points: int = 1
    detach_every: int = 0  # memory knob: detach the dense prompt every k iterations (0 = never)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration per episode")
        if self.train_points is not None and not (1 <= self.train_points[0] <= self.train_points[1]):
            raise ValueError(f"bad train point range {self.train_points}")
        if self.lr_floor <= 0:
            raise ValueError("lr floor must be positive")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Desk-scale defaults: 32^3 patches, 6 iterations, 40 epochs."""
        base = dict(iterations=6, epochs=40)
        base.update(overrides)
        return cls(**base)

    def resolved_variant(self) -> VariantConfig:
        v = resolve_variant(self.variant)
        if self.train_points is not None:
            v = replace(v, train_points=tuple(self.train_points))
        return v


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """max(lr0 - epoch * decrement, floor)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(cfg.lr0 - epoch * cfg.lr_decrement, cfg.lr_floor)


def train_episode(
    model: PromptableSegmenter,
    volume_np: np.ndarray,
    gt_np: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    cache: EpisodeCache | None = None,
    case_id: str = "case",
    detach_dense: bool = False,
) -> EpisodeResult:
    variant = cfg.resolved_variant()
    result = run_episode(
        model,
        volume_np,
        gt_np,
        variant=variant,
        rng=rng,
        iterations=cfg.iterations,
        train=True,
        weights=cfg.weights,
        scribble_cfg=ScribbleConfig(),
        cache=cache,
        case_id=case_id,
        detach_dense=detach_dense,
        detach_every=cfg.detach_every,
    )
    if not torch.isfinite(result.loss):
        diagnostics = {
            "case_id": case_id,
            "loss": float(result.loss.detach()),
            "iterations": [
                {"iteration": r.iteration, "con_loss": r.con_loss, "cor_loss": r.cor_loss, "scores": r.scores}
                for r in result.records
            ],
        }
        raise TrainingDivergedError(f"non-finite loss on {case_id}", diagnostics)
    return result


@dataclass
class FitResult:
    log_rows: list[dict]
    best_val_dice: float
    best_path: str
    last_path: str
    log_path: str


def _val_dice(model, val_cases, cfg: TrainConfig, epoch: int) -> float:
    """Final-iteration Dice with simulated prompts, deterministic per (seed, epoch)."""
    variant = resolve_variant(cfg.variant)
    test_points = variant.test_points if variant.test_points is not None else cfg.val_test_points
    scores = []
    with torch.no_grad():
        for k, (volume, gt) in enumerate(val_cases):
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1_000_003 + epoch, k)))
            vol_np, gt_np, _ = prepare_case(volume, gt, cfg.model.patch_size, rng, augment=False)
            result = run_episode(
                model,
                vol_np,
                gt_np,
                variant=variant,
                rng=rng,
                iterations=cfg.iterations,
                train=False,
                test_points=test_points,
            )
            scores.append(result.final_dice)
    return float(np.mean(scores))


def fit(
    manifest: CaseManifest,
    cfg: TrainConfig,
    out_dir,
    resume_from=None,
) -> FitResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    best_path = out / "best.pt"
    last_path = out / "last.pt"

    train_entries = manifest.by_split("train")
    val_entries = manifest.by_split("val")
    if not train_entries:
        raise ValueError("training split is empty")
    if not val_entries:
        raise ValueError("validation split is empty")
    train_cases = [load_case_entry(e) for e in train_entries]
    val_cases = [load_case_entry(e) for e in val_entries]

    rng = np.random.default_rng(cfg.seed)
    start_epoch = 0
    best_val = -1.0
    if resume_from is not None:
        model, payload = load_checkpoint(resume_from)
        extra = payload["extra"]
        optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr0, weight_decay=cfg.weight_decay)
        optimizer.load_state_dict(payload["optimizer"])
        rng.bit_generator.state = extra["rng_state"]
        torch.set_rng_state(torch.tensor(extra["torch_rng"], dtype=torch.uint8))
        start_epoch = extra["epoch"] + 1
        best_val = extra["best_val_dice"]
    else:
        model = build_model(cfg.model, seed=cfg.seed)
        optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr0, weight_decay=cfg.weight_decay)
        log_path.write_text("")

    log_rows: list[dict] = []
    n = len(train_cases)
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr

        order = rng.permutation(n)
        epoch_loss = 0.0
        steps = 0
        for b0 in range(0, n, cfg.batch_size):
            batch = order[b0 : b0 + cfg.batch_size]
            optimizer.zero_grad()
            batch_loss = None
            for idx in batch:
                volume, gt = train_cases[idx]
                vol_np, gt_np, _ = prepare_case(
                    volume, gt, cfg.model.patch_size, rng,
                    augment=cfg.augment, zoom_range=cfg.zoom_range, shift_range=cfg.shift_range,
                )
                result = train_episode(model, vol_np, gt_np, cfg, rng, case_id=train_entries[idx].case_id)
                batch_loss = result.loss if batch_loss is None else batch_loss + result.loss
            batch_loss = batch_loss / len(batch)
            batch_loss.backward()
            optimizer.step()
            epoch_loss += float(batch_loss.detach())
            steps += 1

        val_dice = _val_dice(model, val_cases, cfg, epoch)
        row = {
            "epoch": epoch,
            "lr": lr,
            "steps": steps,
            "train_loss": epoch_loss / max(steps, 1),
            "val_dice": val_dice,
        }
        log_rows.append(row)
        with open(log_path, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")

        if val_dice > best_val:
            best_val = val_dice
            save_checkpoint(model, best_path, extra={"epoch": epoch, "val_dice": val_dice})
        save_checkpoint(
            model,
            last_path,
            optimizer=optimizer,
            extra={
                "epoch": epoch,
                "best_val_dice": best_val,
                "rng_state": rng.bit_generator.state,
                "torch_rng": torch.get_rng_state().tolist(),
                "train_config": _config_dict(cfg),
            },
        )

    return FitResult(
        log_rows=log_rows,
        best_val_dice=best_val,
        best_path=str(best_path),
        last_path=str(last_path),
        log_path=str(log_path),
    )


def _config_dict(cfg: TrainConfig) -> dict:
    doc = asdict(cfg)
    doc["weights"] = asdict(cfg.weights)
    doc["model"] = asdict(cfg.model)
    return doc


def config_from_dict(doc: dict) -> TrainConfig:
    return TrainConfig(**doc)
