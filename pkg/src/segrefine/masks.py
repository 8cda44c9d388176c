"""Core raster types and mask arithmetic.

All rasters are immutable 2-D row-major arrays. Coordinates follow image
convention: x indexes columns and y indexes rows, so the pixel at column
``ix`` and row ``iy`` of a width-w, height-h raster lives at
``values[iy, ix]`` with ``0 <= ix < w`` and ``0 <= iy < h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

# Probabilities are clamped away from {0, 1} before taking logs.
BCE_EPS = 1e-7

FULL_BCE = "full_bce"
ONE_SIDED = "one_sided"


def _frozen_2d(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a nonempty 2-D raster, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SoftMask:
    """Per-pixel probabilities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_2d(self.values, float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("soft mask contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("soft mask values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def binarize(self, threshold: float = 0.5) -> "BinaryMask":
        """Pixels strictly above ``threshold`` become foreground."""
        return BinaryMask(self.values > threshold)


@dataclass(frozen=True)
class BinaryMask:
    """Boolean foreground mask."""

    bits: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.bits)
        if raw.dtype != np.bool_ and not np.issubdtype(raw.dtype, np.integer):
            raise ValueError(f"binary mask needs bool or integer input, got {raw.dtype}")
        object.__setattr__(self, "bits", _frozen_2d(raw != 0, bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def to_soft(self) -> SoftMask:
        return SoftMask(self.bits.astype(float))

    @staticmethod
    def empty(width: int, height: int) -> "BinaryMask":
        return BinaryMask(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class Image:
    """Grayscale intensity raster in [0, 1]."""

    intensity: np.ndarray

    def __post_init__(self):
        arr = _frozen_2d(self.intensity, float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "intensity", arr)

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def height(self) -> int:
        return self.intensity.shape[0]


def _check_same_shape(a, b, what: str):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{what}: shapes {a.shape} and {b.shape} differ")


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Overlap score 2|A∩B| / (|A| + |B|).

    Two empty masks score 1.0: an all-background prediction of an
    all-background target is a perfect answer, not an undefined one.
    """
    _check_same_shape(a.bits, b.bits, "dice")
    total = a.count + b.count
    if total == 0:
        return 1.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return 2.0 * inter / total


def double_threshold(coarse: SoftMask, t_min: float = 0.15, alpha: float = 0.4) -> BinaryMask:
    """Binarize a coarse probability mask with an absolute and a relative cut.

    Values at or below ``t_min`` are zeroed first; surviving values are kept
    where they exceed ``alpha`` times the surviving maximum. If nothing
    survives the absolute cut the result is all-false.
    """
    if not (0.0 <= t_min < 1.0):
        raise ValueError("t_min must lie in [0, 1)")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    kept = np.where(coarse.values > t_min, coarse.values, 0.0)
    peak = kept.max()
    if peak == 0.0:
        return BinaryMask(np.zeros_like(kept, dtype=bool))
    return BinaryMask(kept > alpha * peak)


def mask_subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels set in ``a`` but not in ``b``."""
    _check_same_shape(a.bits, b.bits, "mask_subtract")
    return BinaryMask(a.bits & ~b.bits)


def bce_loss(pred: SoftMask, target: BinaryMask, kind: str = FULL_BCE) -> float:
    """Pixel-mean binary cross entropy of a prediction against a 0/1 target.

    ``kind`` selects the full two-sided form or the one-sided variant that
    only charges foreground-target pixels. Predictions are clamped to
    [BCE_EPS, 1 - BCE_EPS], so the loss is finite for hard 0/1 predictions
    and never exactly zero.
    """
    _check_same_shape(pred.values, target.bits, "bce_loss")
    s = np.clip(pred.values, BCE_EPS, 1.0 - BCE_EPS)
    t = target.bits
    if kind == FULL_BCE:
        per_pixel = -(np.where(t, np.log(s), 0.0) + np.where(t, 0.0, np.log1p(-s)))
    elif kind == ONE_SIDED:
        per_pixel = -np.where(t, np.log(s), 0.0)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return float(per_pixel.mean())
