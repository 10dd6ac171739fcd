"""3D grid types, the VGRID file format, and intensity preprocessing.

All grids are dense scalar fields stored in z-major (z, y, x) voxel order with
per-axis spacing in mm/voxel. Three kinds exist: ``Volume`` (float intensities),
``BinaryMask`` (0/1 labels) and ``LogitMap`` (unbounded reals; thresholding at 0
gives a mask).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class GridError(Exception):
    """Base class for grid construction and IO errors."""


class MagicError(GridError):
    """File does not start with the VGRID magic."""


class HeaderError(GridError):
    """Header line is present but malformed."""


class PayloadError(GridError):
    """Payload size does not match the header-declared shape."""


class ShapeMismatchError(ValueError):
    """Two grids that must share a shape do not."""


class EmptyForegroundError(ValueError):
    """An operation that needs foreground voxels got an empty mask."""


class DegenerateInputError(ValueError):
    """Input statistics are degenerate (e.g. zero foreground variance)."""


def _check_shape3(shape) -> tuple[int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or any(s <= 0 for s in shape):
        raise ValueError(f"shape must be 3 positive ints, got {shape}")
    return shape


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValueError(f"spacing must be 3 positive reals, got {spacing}")
    return spacing


@dataclass
class Volume:
    """Scalar intensity grid with voxel spacing metadata."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        _check_shape3(self.data.shape)
        self.spacing = _check_spacing(self.spacing)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class BinaryMask:
    """0/1 label grid."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        self.data = arr.astype(np.uint8)
        _check_shape3(self.data.shape)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    def astype_bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass
class LogitMap:
    """Unbounded real-valued grid; ``threshold()`` at 0 yields a BinaryMask."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        _check_shape3(self.data.shape)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("logit map contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def threshold(self) -> BinaryMask:
        return BinaryMask((self.data > 0).astype(np.uint8))


# --------------------------------------------------------------------------
# VGRID file format
#
# One ASCII header line, newline-terminated, then the raw little-endian
# payload in z-major order:
#
#   VGRID1 kind=<volume|mask|logits> dtype=<f32|u8> shape=Z,Y,X spacing=SZ,SY,SX\n
#
# The kind field restores the concrete grid type on read; masks always use u8,
# the two float kinds use f32. Round trips are bit-exact.
# --------------------------------------------------------------------------

_MAGIC = b"VGRID1"
_KINDS = {"volume": (Volume, "f32"), "mask": (BinaryMask, "u8"), "logits": (LogitMap, "f32")}
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def _grid_kind(grid) -> str:
    if isinstance(grid, Volume):
        return "volume"
    if isinstance(grid, BinaryMask):
        return "mask"
    if isinstance(grid, LogitMap):
        return "logits"
    raise TypeError(f"not a grid type: {type(grid)!r}")


def grid_to_bytes(grid) -> bytes:
    kind = _grid_kind(grid)
    dtype = _DTYPES[_KINDS[kind][1]]
    spacing = grid.spacing if isinstance(grid, Volume) else (1.0, 1.0, 1.0)
    header = "VGRID1 kind=%s dtype=%s shape=%s spacing=%s\n" % (
        kind,
        _KINDS[kind][1],
        ",".join(str(s) for s in grid.shape),
        ",".join(repr(float(s)) for s in spacing),
    )
    return header.encode("ascii") + np.ascontiguousarray(grid.data, dtype=dtype).tobytes()


def grid_from_bytes(blob: bytes, origin: str = "<bytes>"):
    if not blob.startswith(_MAGIC):
        raise MagicError(f"{origin}: missing VGRID1 magic")
    nl = blob.find(b"\n")
    if nl < 0:
        raise HeaderError(f"{origin}: unterminated header line")
    try:
        header = blob[:nl].decode("ascii")
    except UnicodeDecodeError as e:
        raise HeaderError(f"{origin}: non-ascii header") from e

    fields = {}
    for token in header.split()[1:]:
        if "=" not in token:
            raise HeaderError(f"{origin}: bad header token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    try:
        kind = fields["kind"]
        dtype_name = fields["dtype"]
        shape = _check_shape3(fields["shape"].split(","))
        spacing = _check_spacing(fields["spacing"].split(","))
    except (KeyError, ValueError) as e:
        raise HeaderError(f"{origin}: {e}") from e
    if kind not in _KINDS:
        raise HeaderError(f"{origin}: unknown kind {kind!r}")
    if dtype_name not in _DTYPES or dtype_name != _KINDS[kind][1]:
        raise HeaderError(f"{origin}: dtype {dtype_name!r} invalid for kind {kind!r}")

    dtype = _DTYPES[dtype_name]
    payload = blob[nl + 1 :]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise PayloadError(f"{origin}: payload is {len(payload)} bytes, header declares {expected}")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if kind == "volume":
        return Volume(data.copy(), spacing)
    if kind == "mask":
        return BinaryMask(data.copy())
    return LogitMap(data.copy())


def write_grid(grid, path) -> None:
    with open(path, "wb") as f:
        f.write(grid_to_bytes(grid))


def read_grid(path):
    with open(path, "rb") as f:
        blob = f.read()
    return grid_from_bytes(blob, origin=str(path))


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


def _require_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def foreground_mask(v: Volume) -> BinaryMask:
    """Default preprocessing foreground: all nonzero-intensity voxels."""
    return BinaryMask((v.data != 0).astype(np.uint8))


def clip_intensities(v: Volume, fg: BinaryMask, lo_pct: float = 0.5, hi_pct: float = 99.5) -> Volume:
    """Clamp intensities to foreground percentiles.

    Percentiles use order statistics (floor index for the low bound, ceil for
    the high bound, at rank pct/100*(n-1)); selection-based bounds make the
    operation exactly idempotent.
    """
    _require_same_shape(v, fg)
    if not (0.0 <= lo_pct < hi_pct <= 100.0):
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got {lo_pct}, {hi_pct}")
    fg_values = v.data[fg.astype_bool()]
    if fg_values.size == 0:
        raise EmptyForegroundError("percentile clipping needs a nonempty foreground")
    lo = np.percentile(fg_values, lo_pct, method="lower")
    hi = np.percentile(fg_values, hi_pct, method="higher")
    return Volume(np.clip(v.data, lo, hi), v.spacing)


def zscore_normalize(v: Volume, fg: BinaryMask) -> Volume:
    """Standardize all voxels by the foreground mean and std."""
    _require_same_shape(v, fg)
    fg_values = v.data[fg.astype_bool()].astype(np.float64)
    if fg_values.size == 0:
        raise EmptyForegroundError("z-score normalization needs a nonempty foreground")
    mu = fg_values.mean()
    sigma = fg_values.std()
    if sigma == 0:
        raise DegenerateInputError("foreground standard deviation is zero")
    return Volume(((v.data - mu) / sigma).astype(np.float32), v.spacing)


def crop_patch(
    v: Volume, y: BinaryMask, size: tuple[int, int, int], rng: np.random.Generator
) -> tuple[Volume, BinaryMask, tuple[int, int, int]]:
    """Extract a patch centered on a uniformly chosen foreground voxel of y.

    Out-of-bounds regions are zero padded. Returns (patch, mask patch, offset)
    where offset is the patch origin in volume coordinates (may be negative);
    patch voxel p corresponds to volume voxel offset + p.
    """
    _require_same_shape(v, y)
    size = _check_shape3(size)
    coords = np.argwhere(y.astype_bool())
    if len(coords) == 0:
        raise EmptyForegroundError("crop_patch needs at least one foreground voxel")
    center = coords[rng.integers(len(coords))]
    offset = tuple(int(c) - s // 2 for c, s in zip(center, size))

    vol_patch = np.zeros(size, dtype=np.float32)
    mask_patch = np.zeros(size, dtype=np.uint8)
    src_lo = [max(0, o) for o in offset]
    src_hi = [min(sh, o + s) for sh, o, s in zip(v.shape, offset, size)]
    dst_lo = [sl - o for sl, o in zip(src_lo, offset)]
    dst_hi = [dl + (sh - sl) for dl, sl, sh in zip(dst_lo, src_lo, src_hi)]
    if all(hi > lo for lo, hi in zip(src_lo, src_hi)):
        src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
        dst = tuple(slice(lo, hi) for lo, hi in zip(dst_lo, dst_hi))
        vol_patch[dst] = v.data[src]
        mask_patch[dst] = y.data[src]
    return Volume(vol_patch, v.spacing), BinaryMask(mask_patch), offset


def paste_patch(patch_data: np.ndarray, full_shape, offset) -> np.ndarray:
    """Inverse of crop_patch placement: put patch values back on a zero grid."""
    out = np.zeros(full_shape, dtype=patch_data.dtype)
    src_lo = [max(0, -o) for o in offset]
    src_hi = [min(s, fs - o) for s, fs, o in zip(patch_data.shape, full_shape, offset)]
    dst_lo = [o + sl for o, sl in zip(offset, src_lo)]
    dst_hi = [o + sh for o, sh in zip(offset, src_hi)]
    if all(hi > lo for lo, hi in zip(src_lo, src_hi)):
        src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
        dst = tuple(slice(lo, hi) for lo, hi in zip(dst_lo, dst_hi))
        out[dst] = patch_data[src]
    return out


def augment_zoom(
    v: Volume,
    y: BinaryMask,
    factor_range: tuple[float, float] = (0.85, 1.15),
    rng: np.random.Generator | None = None,
    factor: float | None = None,
) -> tuple[Volume, BinaryMask]:
    """Resample about the grid center by a random zoom factor.

    Output voxel o samples input at center + (o - center) * factor, so factors
    below 1 magnify content. Trilinear for the volume, nearest for the mask,
    output shape unchanged.
    """
    _require_same_shape(v, y)
    if factor is None:
        if rng is None:
            raise ValueError("need rng when factor is not fixed")
        factor = float(rng.uniform(*factor_range))
    if factor <= 0:
        raise ValueError(f"zoom factor must be positive, got {factor}")
    if factor == 1.0:
        return Volume(v.data.copy(), v.spacing), BinaryMask(y.data.copy())

    center = (np.array(v.shape, dtype=np.float64) - 1.0) / 2.0
    grids = np.meshgrid(*(np.arange(s, dtype=np.float64) for s in v.shape), indexing="ij")
    coords = [c + (g - c) * factor for g, c in zip(grids, center)]
    vol = ndimage.map_coordinates(v.data, coords, order=1, mode="constant", cval=0.0)
    mask = ndimage.map_coordinates(y.data, coords, order=0, mode="constant", cval=0)
    return Volume(vol.astype(np.float32), v.spacing), BinaryMask(mask.astype(np.uint8))


def augment_intensity_shift(
    v: Volume,
    shift_range: tuple[float, float] = (-0.1, 0.1),
    rng: np.random.Generator | None = None,
    shift: float | None = None,
) -> Volume:
    """Add a random scalar offset on the normalized intensity scale."""
    if shift is None:
        if rng is None:
            raise ValueError("need rng when shift is not fixed")
        shift = float(rng.uniform(*shift_range))
    return Volume(v.data + np.float32(shift), v.spacing)
