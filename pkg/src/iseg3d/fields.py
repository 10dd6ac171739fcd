"""Smooth random scalar and displacement fields over 3D grids.

Shared by the synthetic-case generator (lesion warping, background texture)
and the scribble simulator (curvature deformation).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def smooth_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian white noise smoothed by a Gaussian filter, zero mean-ish."""
    noise = rng.standard_normal(shape)
    if sigma > 0:
        noise = ndimage.gaussian_filter(noise, sigma=sigma)
    return noise


def smooth_displacement_field(
    shape, amplitude: float, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Per-axis smooth displacement, shape (3, z, y, x), max-normalized to amplitude voxels."""
    field = np.zeros((3,) + tuple(shape), dtype=np.float64)
    if amplitude == 0:
        return field
    for axis in range(3):
        channel = smooth_noise(shape, sigma, rng)
        peak = np.abs(channel).max()
        if peak > 0:
            channel = channel / peak * amplitude
        field[axis] = channel
    return field


def warp_binary(mask: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """Pull-back warp of a binary array: out[v] = mask[v + d(v)], nearest voxel."""
    if not np.any(mask):
        return np.zeros_like(mask)
    grids = np.meshgrid(*(np.arange(s, dtype=np.float64) for s in mask.shape), indexing="ij")
    coords = [np.rint(g + d) for g, d in zip(grids, displacement)]
    for axis, c in enumerate(coords):
        np.clip(c, 0, mask.shape[axis] - 1, out=c)
    idx = tuple(c.astype(np.intp) for c in coords)
    return mask[idx]


def value_noise(shape, cell: int, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency texture in [0, 1]: coarse uniform lattice, trilinearly upsampled."""
    coarse_shape = tuple(max(2, int(np.ceil(s / cell)) + 1) for s in shape)
    coarse = rng.uniform(0.0, 1.0, size=coarse_shape)
    zoom = [s / cs for s, cs in zip(shape, coarse_shape)]
    out = ndimage.zoom(coarse, zoom, order=1, mode="nearest", grid_mode=True)
    return np.clip(out[: shape[0], : shape[1], : shape[2]], 0.0, 1.0)
