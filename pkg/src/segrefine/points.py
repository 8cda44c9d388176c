"""Prompt points: labeled (x, y) coordinates handed to a segmentor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


@dataclass(frozen=True)
class PromptPoint:
    """A single click: continuous pixel coordinates plus a polarity.

    ``x`` indexes columns, ``y`` rows. Positive points mark foreground,
    negative points mark background.
    """

    x: float
    y: float
    positive: bool

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "positive", bool(self.positive))

    @property
    def label(self) -> int:
        return 1 if self.positive else 0

    def flipped(self) -> "PromptPoint":
        return PromptPoint(self.x, self.y, not self.positive)

    def clamped(self, width: int, height: int) -> "PromptPoint":
        """Clamp coordinates into [0, width-1] x [0, height-1]."""
        return PromptPoint(
            min(max(self.x, 0.0), float(width - 1)),
            min(max(self.y, 0.0), float(height - 1)),
            self.positive,
        )


@dataclass(frozen=True)
class PromptSet:
    """An ordered collection of prompt points."""

    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        if not all(isinstance(p, PromptPoint) for p in pts):
            raise ValueError("PromptSet takes PromptPoint instances")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[PromptPoint]:
        return iter(self.points)

    def __getitem__(self, idx) -> PromptPoint:
        return self.points[idx]

    @property
    def positives(self) -> tuple:
        return tuple(p for p in self.points if p.positive)

    @property
    def negatives(self) -> tuple:
        return tuple(p for p in self.points if not p.positive)

    def coords(self) -> np.ndarray:
        """(n, 2) array of [x, y] rows."""
        return np.array([[p.x, p.y] for p in self.points], dtype=float).reshape(len(self.points), 2)

    def to_records(self) -> list:
        """Wire/report shape: [{"x": .., "y": .., "label": 0|1}, ...]."""
        return [{"x": p.x, "y": p.y, "label": p.label} for p in self.points]

    @staticmethod
    def from_records(records: Iterable[dict]) -> "PromptSet":
        return PromptSet(tuple(PromptPoint(r["x"], r["y"], bool(r["label"])) for r in records))


def flip_polarity(prompts: PromptSet) -> PromptSet:
    """Swap every point's polarity; an involution that preserves order."""
    return PromptSet(tuple(p.flipped() for p in prompts))
