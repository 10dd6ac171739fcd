"""Overlap and surface agreement metrics, plus iteration-curve summaries.

Conventions: two empty masks score 1.0 for both Dice and NSD; empty versus
nonempty scores 0. Surfaces use 6-connectivity (a mask voxel is surface when
any face neighbor, including beyond-grid, is outside the mask) and distances
are Euclidean in spacing units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import BinaryMask, ShapeMismatchError

_FACE_STRUCT = ndimage.generate_binary_structure(3, 1)


def dice_score(a: BinaryMask, b: BinaryMask) -> float:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    am, bm = a.astype_bool(), b.astype_bool()
    denom = int(am.sum()) + int(bm.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((am & bm).sum()) / denom


def surface_voxels(mask: BinaryMask) -> np.ndarray:
    """Boolean array marking mask voxels with at least one face neighbor outside."""
    m = mask.astype_bool()
    interior = ndimage.binary_erosion(m, structure=_FACE_STRUCT, border_value=0)
    return m & ~interior


def nsd_score(a: BinaryMask, b: BinaryMask, tau: float = 1.0, spacing=(1.0, 1.0, 1.0)) -> float:
    """Normalized surface Dice at tolerance tau (same units as spacing)."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    surf_a = surface_voxels(a)
    surf_b = surface_voxels(b)
    n_a, n_b = int(surf_a.sum()), int(surf_b.sum())
    if n_a == 0 and n_b == 0:
        return 1.0
    if n_a == 0 or n_b == 0:
        return 0.0
    dist_to_b = ndimage.distance_transform_edt(~surf_b, sampling=spacing)
    dist_to_a = ndimage.distance_transform_edt(~surf_a, sampling=spacing)
    close_a = int((dist_to_b[surf_a] <= tau).sum())
    close_b = int((dist_to_a[surf_b] <= tau).sum())
    return (close_a + close_b) / (n_a + n_b)


@dataclass
class IterationCurve:
    """Per-iteration means with 95% normal-approximation CI half-widths."""

    dice_mean: list[float]
    dice_ci: list[float]
    nsd_mean: list[float]
    nsd_ci: list[float]
    n_cases: int

    def __post_init__(self):
        lengths = {len(self.dice_mean), len(self.dice_ci), len(self.nsd_mean), len(self.nsd_ci)}
        if len(lengths) != 1:
            raise ValueError("per-iteration series must share one length")
        if any(c < 0 for c in self.dice_ci + self.nsd_ci):
            raise ValueError("CI half-widths must be >= 0")


def _mean_ci(values: np.ndarray) -> tuple[list[float], list[float]]:
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        ci = np.zeros_like(mean)
    else:
        sd = values.std(axis=0, ddof=1)
        ci = 1.96 * sd / np.sqrt(values.shape[0])
    return [float(x) for x in mean], [float(x) for x in ci]


def iteration_curves(dice_per_case, nsd_per_case) -> IterationCurve:
    """dice_per_case / nsd_per_case: (n_cases, n_iterations) arrays or nested lists."""
    dice = np.asarray(dice_per_case, dtype=np.float64)
    nsd = np.asarray(nsd_per_case, dtype=np.float64)
    if dice.ndim != 2 or dice.shape != nsd.shape:
        raise ValueError("expect matching (n_cases, n_iterations) arrays")
    dice_mean, dice_ci = _mean_ci(dice)
    nsd_mean, nsd_ci = _mean_ci(nsd)
    return IterationCurve(dice_mean, dice_ci, nsd_mean, nsd_ci, n_cases=dice.shape[0])
