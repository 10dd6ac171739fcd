"""Visual prompt machinery: error regions, point sampling, boxes, scribbles.

Simulated prompts mimic a corrective user: points and scribbles are drawn from
the false-negative / false-positive regions of the previous prediction, the
bounding box is fixed at iteration 1 from ground truth. Scribbles are grown
from region skeletons, broken into parts, deformed and re-thickened, then
clipped back to the originating error region so their polarity is always
consistent with ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import smooth_displacement_field, warp_binary
from .grids import BinaryMask, ShapeMismatchError

POSITIVE = 1
NEGATIVE = 0


class BoxImmutableError(ValueError):
    """A box prompt was supplied after iteration 1."""


@dataclass(frozen=True)
class PointPrompt:
    coord: tuple[int, int, int]
    label: int

    def __post_init__(self):
        object.__setattr__(self, "coord", tuple(int(c) for c in self.coord))
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class BoxPrompt:
    min_corner: tuple[int, int, int]
    max_corner: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "min_corner", tuple(int(c) for c in self.min_corner))
        object.__setattr__(self, "max_corner", tuple(int(c) for c in self.max_corner))
        if any(a > b for a, b in zip(self.min_corner, self.max_corner)):
            raise ValueError(f"box corners out of order: {self.min_corner} > {self.max_corner}")
        if any(c < 0 for c in self.min_corner):
            raise ValueError(f"box extends below 0: {self.min_corner}")

    def check_in_grid(self, shape) -> None:
        if any(c >= s for c, s in zip(self.max_corner, shape)):
            raise ValueError(f"box {self.max_corner} exceeds grid {tuple(shape)}")


@dataclass
class Scribble:
    voxels: np.ndarray  # (n, 3) int voxel coords
    label: int

    def __post_init__(self):
        self.voxels = np.atleast_2d(np.asarray(self.voxels, dtype=np.int64))
        if self.voxels.size == 0 or self.voxels.shape[1] != 3:
            raise ValueError("scribble needs at least one 3d voxel")
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def error_regions(pred: BinaryMask, gt: BinaryMask) -> tuple[BinaryMask, BinaryMask]:
    """(false negatives, false positives) of pred against gt."""
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = pred.astype_bool()
    g = gt.astype_bool()
    return BinaryMask((g & ~p).astype(np.uint8)), BinaryMask((p & ~g).astype(np.uint8))


def sample_points(
    fn: BinaryMask,
    fp: BinaryMask,
    n: int,
    rng: np.random.Generator,
    gt: BinaryMask | None = None,
) -> list[PointPrompt]:
    """n iid uniform draws over FN ∪ FP; FN voxels get positive labels.

    When both regions are empty (iteration 1, or a perfect prediction) the
    fallback is a single positive point uniform over the ground-truth
    foreground, which must then be provided.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    fn_coords = np.argwhere(fn.astype_bool())
    fp_coords = np.argwhere(fp.astype_bool())
    total = len(fn_coords) + len(fp_coords)
    if total == 0:
        if gt is None:
            raise ValueError("both error regions empty and no ground truth for fallback")
        gt_coords = np.argwhere(gt.astype_bool())
        if len(gt_coords) == 0:
            raise ValueError("fallback needs a nonempty ground-truth foreground")
        c = gt_coords[rng.integers(len(gt_coords))]
        return [PointPrompt(tuple(c), POSITIVE)]

    picks = rng.integers(total, size=n)
    out = []
    for k in picks:
        if k < len(fn_coords):
            out.append(PointPrompt(tuple(fn_coords[k]), POSITIVE))
        else:
            out.append(PointPrompt(tuple(fp_coords[k - len(fn_coords)]), NEGATIVE))
    return out


def ground_truth_bbox(y: BinaryMask) -> BoxPrompt:
    coords = np.argwhere(y.astype_bool())
    if len(coords) == 0:
        raise ValueError("cannot box an empty mask")
    return BoxPrompt(tuple(coords.min(axis=0)), tuple(coords.max(axis=0)))


def perturb_bbox(b: BoxPrompt, radius: int, mode: str, grid_shape) -> BoxPrompt:
    """Move every face inward (erode) or outward (dilate) by radius voxels.

    Dilation clamps to the grid. An erosion that would invert a dimension
    collapses that dimension to the box center plane, floor((lo + hi) / 2).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if mode not in ("erode", "dilate"):
        raise ValueError(f"mode must be erode or dilate, got {mode!r}")
    lo, hi = [], []
    for axis in range(3):
        a, z = b.min_corner[axis], b.max_corner[axis]
        if mode == "dilate":
            a, z = a - radius, z + radius
            a = max(a, 0)
            z = min(z, grid_shape[axis] - 1)
        else:
            a, z = a + radius, z - radius
            if a > z:
                a = z = (b.min_corner[axis] + b.max_corner[axis]) // 2
        lo.append(a)
        hi.append(z)
    return BoxPrompt(tuple(lo), tuple(hi))


# --------------------------------------------------------------------------
# Skeletonization: 2D Zhang-Suen thinning per axial (z) slice, unioned.
# --------------------------------------------------------------------------


def _thin_slice(img: np.ndarray) -> np.ndarray:
    """One 2D slice, zero-padded internally; iterates both subpasses to a fixpoint."""
    p = np.zeros((img.shape[0] + 2, img.shape[1] + 2), dtype=np.uint8)
    p[1:-1, 1:-1] = img
    while True:
        removed_any = False
        for step in (0, 1):
            n = p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:], p[2:, 2:], p[2:, 1:-1], p[2:, :-2], p[1:-1, :-2], p[:-2, :-2]
            seq = n + (n[0],)
            transitions = np.zeros(n[0].shape, dtype=np.uint8)
            for a, b in zip(seq[:-1], seq[1:]):
                transitions += (a == 0) & (b == 1)
            count = sum(x.astype(np.uint8) for x in n)
            p2, p4, p6, p8 = n[0], n[2], n[4], n[6]
            if step == 0:
                cond = ((p2 & p4 & p6) == 0) & ((p4 & p6 & p8) == 0)
            else:
                cond = ((p2 & p4 & p8) == 0) & ((p2 & p6 & p8) == 0)
            kill = (p[1:-1, 1:-1] == 1) & (count >= 2) & (count <= 6) & (transitions == 1) & cond
            if kill.any():
                p[1:-1, 1:-1][kill] = 0
                removed_any = True
        if not removed_any:
            return p[1:-1, 1:-1]


def skeletonize(region: BinaryMask) -> BinaryMask:
    """Slice-wise morphological thinning; skeleton is always a subset of the region."""
    out = np.zeros(region.shape, dtype=np.uint8)
    for z in range(region.shape[0]):
        sl = region.data[z]
        if sl.any():
            out[z] = _thin_slice(sl)
    return BinaryMask(out)


def random_split_mask(shape, blur_sigma: float, rng: np.random.Generator) -> BinaryMask:
    """Threshold blurred normal noise at its mean; splits regions roughly in half."""
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    noise = rng.standard_normal(shape)
    if blur_sigma > 0:
        noise = ndimage.gaussian_filter(noise, blur_sigma)
    return BinaryMask((noise > noise.mean()).astype(np.uint8))


@dataclass
class ScribbleConfig:
    split_parts: bool = True
    split_blur_sigma: float = 1.0
    deform_amplitude: float = 2.0
    deform_sigma: float = 4.0
    thickness_sigma_range: tuple[float, float] = (0.0, 1.5)


_CONN26 = np.ones((3, 3, 3), dtype=np.uint8)


def generate_scribbles(
    fn: BinaryMask,
    fp: BinaryMask,
    gt: BinaryMask,
    rng: np.random.Generator,
    cfg: ScribbleConfig | None = None,
) -> list[Scribble]:
    """Simulated corrective scribbles, one per connected piece.

    Per error region: skeletonize, break apart with a random split mask, warp
    with a smooth displacement field, re-thicken by blur + relative threshold,
    then intersect with the originating region. FN pieces are positive,
    FP pieces negative; empty regions yield nothing.
    """
    cfg = cfg or ScribbleConfig()
    out: list[Scribble] = []
    for region, label in ((fn, POSITIVE), (fp, NEGATIVE)):
        if not region.data.any():
            continue
        work = skeletonize(region).data.astype(np.uint8)
        if cfg.split_parts:
            work &= random_split_mask(region.shape, cfg.split_blur_sigma, rng).data
        if not work.any():
            continue
        if cfg.deform_amplitude > 0:
            disp = smooth_displacement_field(region.shape, cfg.deform_amplitude, cfg.deform_sigma, rng)
            work = warp_binary(work, disp)
        sigma = float(rng.uniform(*cfg.thickness_sigma_range))
        if sigma > 0 and work.any():
            blurred = ndimage.gaussian_filter(work.astype(np.float64), sigma)
            work = (blurred >= 0.5 * blurred.max()).astype(np.uint8)
        work &= region.data  # guarantee polarity consistency with ground truth
        if not work.any():
            continue
        labeled, n_parts = ndimage.label(work, structure=_CONN26)
        for part in range(1, n_parts + 1):
            out.append(Scribble(np.argwhere(labeled == part), label))
    return out


def rasterize_prompts(points, scribbles, shape) -> tuple[BinaryMask, BinaryMask]:
    """Binary positive/negative maps with 1 exactly at prompted voxels."""
    pos = np.zeros(shape, dtype=np.uint8)
    neg = np.zeros(shape, dtype=np.uint8)

    def _put(target, coord):
        if any(c < 0 or c >= s for c, s in zip(coord, shape)):
            raise ValueError(f"prompt voxel {tuple(coord)} outside grid {tuple(shape)}")
        target[tuple(int(c) for c in coord)] = 1

    for pt in points:
        _put(pos if pt.label == POSITIVE else neg, pt.coord)
    for sc in scribbles:
        target = pos if sc.label == POSITIVE else neg
        for coord in sc.voxels:
            _put(target, coord)
    return BinaryMask(pos), BinaryMask(neg)


@dataclass
class PromptState:
    """Prompts for one iteration plus the cumulative click maps.

    Current points/scribbles are never carried over between iterations; only
    the cumulative maps grow (by set union). The box is fixed at iteration 1.
    ``previous_logits`` is the dense prompt and is absent exactly at
    iteration 1; it may be a LogitMap (simulation, serving) or a framework
    tensor (training keeps it gradient-retaining).
    """

    iteration: int
    points: list[PointPrompt] = field(default_factory=list)
    scribbles: list[Scribble] = field(default_factory=list)
    box: BoxPrompt | None = None
    cumulative_positive: BinaryMask | None = None
    cumulative_negative: BinaryMask | None = None
    previous_logits: object | None = None

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iteration index starts at 1")
        if (self.previous_logits is None) != (self.iteration == 1):
            raise ValueError("previous_logits must be present exactly when iteration > 1")

    @classmethod
    def initial(cls, shape, points=(), scribbles=(), box: BoxPrompt | None = None) -> "PromptState":
        if box is not None:
            box.check_in_grid(shape)
        pos, neg = rasterize_prompts(points, scribbles, shape)
        return cls(
            iteration=1,
            points=list(points),
            scribbles=list(scribbles),
            box=box,
            cumulative_positive=pos,
            cumulative_negative=neg,
        )

    def advance(self, points=(), scribbles=(), previous_logits=None, box: BoxPrompt | None = None) -> "PromptState":
        """Next-iteration state: fresh current prompts, grown cumulative maps."""
        if box is not None:
            raise BoxImmutableError("the box prompt is fixed at iteration 1")
        if previous_logits is None:
            raise ValueError("iterations beyond the first need the previous logits map")
        shape = self.cumulative_positive.shape
        pos, neg = rasterize_prompts(points, scribbles, shape)
        return PromptState(
            iteration=self.iteration + 1,
            points=list(points),
            scribbles=list(scribbles),
            box=self.box,
            cumulative_positive=BinaryMask(self.cumulative_positive.data | pos.data),
            cumulative_negative=BinaryMask(self.cumulative_negative.data | neg.data),
            previous_logits=previous_logits,
        )
