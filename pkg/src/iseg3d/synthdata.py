"""Procedural tumor-like 3D cases: ambiguous boundaries, 1-3 lesions, texture.

Stands in for CT datasets at desk scale. Every case is a (Volume, BinaryMask)
pair, fully determined by (SynthSpec, case_seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .fields import smooth_displacement_field, value_noise, warp_binary
from .grids import BinaryMask, Volume, write_grid

SPLITS = ("train", "val", "test")


@dataclass
class SynthSpec:
    grid_size: tuple[int, int, int] = (32, 32, 32)
    lesion_count_range: tuple[int, int] = (1, 3)
    radius_range: tuple[float, float] = (3.0, 7.0)
    boundary_blur_sigma: float = 1.0
    contrast: float = 1.0
    noise_sigma: float = 0.05
    deformation_amplitude: float = 1.5
    background_level: float = 0.5
    background_cell: int = 8
    seed: int = 0

    def __post_init__(self):
        self.grid_size = tuple(int(s) for s in self.grid_size)
        if self.lesion_count_range[0] < 1 or self.lesion_count_range[0] > self.lesion_count_range[1]:
            raise ValueError(f"bad lesion_count_range {self.lesion_count_range}")
        if self.radius_range[0] <= 0 or self.radius_range[0] > self.radius_range[1]:
            raise ValueError(f"bad radius_range {self.radius_range}")
        if min(self.boundary_blur_sigma, self.noise_sigma, self.deformation_amplitude) < 0:
            raise ValueError("sigmas and deformation amplitude must be >= 0")
        margin = self._margin()
        if any(2 * margin >= s for s in self.grid_size):
            raise ValueError(
                f"lesions of radius up to {self.radius_range[1]} cannot fit in grid {self.grid_size}"
            )

    def _margin(self) -> int:
        # Keeps the warped lesion surface >= 1 voxel inside the grid.
        return int(np.ceil(self.radius_range[1] + self.deformation_amplitude + 1))


def _ellipsoid(shape, center, radii) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(s, dtype=np.float64) for s in shape), indexing="ij")
    acc = np.zeros(shape, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc += ((g - c) / r) ** 2
    return (acc <= 1.0).astype(np.uint8)


def generate_case(spec: SynthSpec, case_seed: int) -> tuple[Volume, BinaryMask]:
    """Deterministic (volume, mask) pair for one synthetic subject."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, case_seed)))
    shape = spec.grid_size
    margin = spec._margin()

    n_lesions = int(rng.integers(spec.lesion_count_range[0], spec.lesion_count_range[1] + 1))
    mask = np.zeros(shape, dtype=np.uint8)
    for _ in range(n_lesions):
        radii = rng.uniform(spec.radius_range[0], spec.radius_range[1], size=3)
        center = [rng.uniform(margin, s - 1 - margin) for s in shape]
        lesion = _ellipsoid(shape, center, radii)
        if spec.deformation_amplitude > 0:
            disp = smooth_displacement_field(shape, spec.deformation_amplitude, sigma=4.0, rng=rng)
            lesion = warp_binary(lesion, disp)
        mask |= lesion

    if not mask.any():
        raise RuntimeError("generated an empty lesion mask; spec too aggressive")
    shell = np.ones(shape, dtype=bool)
    shell[1:-1, 1:-1, 1:-1] = False
    if mask[shell].any():
        raise RuntimeError("lesion touched the grid boundary; margin too small")

    volume = np.zeros(shape, dtype=np.float64)
    if spec.background_level > 0:
        volume += spec.background_level * value_noise(shape, spec.background_cell, rng)
    signal = spec.contrast * mask.astype(np.float64)
    if spec.boundary_blur_sigma > 0:
        signal = ndimage.gaussian_filter(signal, spec.boundary_blur_sigma)
    volume += signal
    if spec.noise_sigma > 0:
        volume += spec.noise_sigma * rng.standard_normal(shape)
    return Volume(volume.astype(np.float32)), BinaryMask(mask)


# --------------------------------------------------------------------------
# Manifests
# --------------------------------------------------------------------------


@dataclass
class CaseEntry:
    case_id: str
    image_path: str
    label_path: str
    split: str


@dataclass
class CaseManifest:
    cases: list[CaseEntry] = field(default_factory=list)

    def by_split(self, split: str) -> list[CaseEntry]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [c for c in self.cases if c.split == split]

    def save(self, path) -> None:
        doc = {"format": "iseg3d-manifest", "version": 1, "cases": [asdict(c) for c in self.cases]}
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "CaseManifest":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "iseg3d-manifest":
            raise ValueError(f"{path}: not a manifest file")
        return cls(cases=[CaseEntry(**c) for c in doc["cases"]])


def split_sizes(n: int, ratios) -> tuple[int, int, int]:
    """Cumulative rounding rule: boundary k = floor(n * cum_ratio + 0.5)."""
    b1 = int(np.floor(n * ratios[0] + 0.5))
    b2 = int(np.floor(n * (ratios[0] + ratios[1]) + 0.5))
    return b1, b2 - b1, n - b2


def build_manifest(
    n_cases: int,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    name_fmt: str = "case_{:04d}",
    out_dir: str = ".",
) -> CaseManifest:
    """Shuffled train/val/test assignment, deterministic per seed."""
    if n_cases < 10:
        raise ValueError("need at least 10 cases to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_cases)
    n_train, n_val, _ = split_sizes(n_cases, ratios)

    entries = [None] * n_cases
    for rank, idx in enumerate(order):
        split = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
        case_id = name_fmt.format(idx)
        entries[idx] = CaseEntry(
            case_id=case_id,
            image_path=str(Path(out_dir) / f"{case_id}_img.vgrid"),
            label_path=str(Path(out_dir) / f"{case_id}_seg.vgrid"),
            split=split,
        )
    return CaseManifest(cases=list(entries))


def generate_dataset(
    spec: SynthSpec,
    n_cases: int,
    out_dir,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> CaseManifest:
    """Write VGRID pairs plus manifest.json; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(n_cases, ratios, seed=seed, out_dir=str(out))
    for i, entry in enumerate(manifest.cases):
        volume, mask = generate_case(spec, case_seed=i)
        write_grid(volume, entry.image_path)
        write_grid(mask, entry.label_path)
    manifest.save(out / "manifest.json")
    return manifest
