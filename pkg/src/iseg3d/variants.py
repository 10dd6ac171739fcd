"""Prompt-availability presets for the ablation grid.

Each preset fixes which sparse prompts the model sees during training and
testing. ``train_points`` is the inclusive range the per-iteration point count
is drawn from; ``test_points=None`` means the count varies and must be given
at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class VariantConfig:
    name: str
    train_points: tuple[int, int]
    test_points: int | None
    use_box: bool
    use_scribbles_train: bool
    use_scribbles_test: bool

    def __post_init__(self):
        lo, hi = self.train_points
        if not (1 <= lo <= hi):
            raise ValueError(f"bad train point range {self.train_points}")
        if self.test_points is not None and self.test_points < 1:
            raise ValueError("test point count must be >= 1")
        if self.use_scribbles_train and not self.use_scribbles_test:
            raise ValueError("train-time scribbles imply test-time scribbles")


VARIANTS = {
    "plain": VariantConfig("plain", (1, 1), 1, use_box=False, use_scribbles_train=False, use_scribbles_test=False),
    "plain-b": VariantConfig("plain-b", (1, 1), 1, use_box=True, use_scribbles_train=False, use_scribbles_test=False),
    "basic": VariantConfig("basic", (1, 50), 1, use_box=True, use_scribbles_train=False, use_scribbles_test=False),
    "ultra": VariantConfig("ultra", (1, 50), None, use_box=True, use_scribbles_train=False, use_scribbles_test=True),
    "ultra+": VariantConfig("ultra+", (1, 50), None, use_box=True, use_scribbles_train=True, use_scribbles_test=True),
}

BOX_MODES = ("tight", "erode5", "dilate5")


def resolve_variant(variant) -> VariantConfig:
    if isinstance(variant, VariantConfig):
        return variant
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; know {sorted(VARIANTS)}") from None
