"""Simulated-user evaluation: per-case sessions, iteration curves, ablations."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np
import torch

from .engine import EpisodeResult, load_case_entry, prepare_case, run_episode
from .metrics import IterationCurve, iteration_curves
from .model.network import PromptableSegmenter
from .synthdata import CaseManifest
from .variants import BOX_MODES, resolve_variant

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalConfig:
    variant: str = "basic"
    iterations: int = 6
    test_points: int | None = None  # None: the variant's default (must be fixed there)
    box_mode: str = "tight"
    scribbles: bool | None = None  # None: the variant's test-time setting
    seed: int = 0
    tau: float = 1.0

    def __post_init__(self):
        if self.box_mode not in BOX_MODES:
            raise ValueError(f"box_mode must be one of {BOX_MODES}")
        if self.test_points is not None and self.test_points < 1:
            raise ValueError("test_points must be >= 1")


def simulate_user_session(
    model: PromptableSegmenter,
    case,
    eval_cfg: EvalConfig,
    case_index: int = 0,
    case_id: str = "case",
) -> EpisodeResult:
    """Run the interactive loop on one (Volume, BinaryMask) case, no gradients.

    Metrics are recorded after every iteration; the final segmentation is the
    refined prediction of the last one.
    """
    volume, gt = case
    variant = resolve_variant(eval_cfg.variant)
    rng = np.random.default_rng(np.random.SeedSequence((eval_cfg.seed, case_index)))
    vol_np, gt_np, _ = prepare_case(volume, gt, model.cfg.patch_size, rng, augment=False)
    with torch.no_grad():
        return run_episode(
            model,
            vol_np,
            gt_np,
            variant=variant,
            rng=rng,
            iterations=eval_cfg.iterations,
            train=False,
            test_points=eval_cfg.test_points,
            box_mode=eval_cfg.box_mode,
            scribbles_enabled=eval_cfg.scribbles,
            case_id=case_id,
            compute_nsd=True,
            tau=eval_cfg.tau,
            spacing=volume.spacing,
        )


def evaluate_cases(model, cases, eval_cfg: EvalConfig) -> tuple[IterationCurve, list[EpisodeResult]]:
    """Sessions over a case list; returns the iteration curve and raw results."""
    results = []
    for k, case in enumerate(cases):
        results.append(simulate_user_session(model, case, eval_cfg, case_index=k, case_id=f"case{k}"))
    dice = [[r.dice for r in res.records] for res in results]
    nsd = [[r.nsd for r in res.records] for res in results]
    return iteration_curves(dice, nsd), results


def load_split_cases(manifest: CaseManifest, split: str, limit: int | None = None):
    entries = manifest.by_split(split)
    if limit is not None:
        entries = entries[:limit]
    return [load_case_entry(e) for e in entries]


def ablation_matrix(
    models,
    cases,
    variants=("basic",),
    points=(1,),
    box_modes=("tight",),
    scribbles=(False,),
    base_cfg: EvalConfig | None = None,
) -> dict:
    """Cross-product evaluation over {variant} x {test points} x {box mode} x {scribbles}.

    ``models`` is either a single model used for every variant or a mapping
    from variant name to model. Returns a machine-readable report dict.
    """
    base = base_cfg or EvalConfig()
    rows = []
    for variant in variants:
        model = models[variant] if isinstance(models, dict) else models
        for n_points in points:
            for box_mode in box_modes:
                for scribble_flag in scribbles:
                    cfg = replace(
                        base,
                        variant=variant,
                        test_points=int(n_points),
                        box_mode=box_mode,
                        scribbles=bool(scribble_flag),
                    )
                    curve, _ = evaluate_cases(model, cases, cfg)
                    rows.append(
                        {
                            "variant": variant,
                            "test_points": int(n_points),
                            "box_mode": box_mode,
                            "scribbles": bool(scribble_flag),
                            "dice": curve.dice_mean[-1],
                            "nsd": curve.nsd_mean[-1],
                            "dice_curve": curve.dice_mean,
                            "n_cases": curve.n_cases,
                        }
                    )
    return {"schema_version": REPORT_SCHEMA_VERSION, "rows": rows}


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True))


def curve_report(curve: IterationCurve, eval_cfg: EvalConfig) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": asdict(eval_cfg),
        "dice_mean": curve.dice_mean,
        "dice_ci95": curve.dice_ci,
        "nsd_mean": curve.nsd_mean,
        "nsd_ci95": curve.nsd_ci,
        "n_cases": curve.n_cases,
    }
