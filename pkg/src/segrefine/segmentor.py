"""Promptable segmentation backends and coordinate gradients.

A segmentor maps (image, prompt points) to a per-pixel probability mask.
The analytic backend below is a closed-form stand-in for a heavyweight
model: each prompt contributes a Gaussian influence field (positive points
attract, negative points repel) and the image contributes an intensity
affinity, all squashed through a sigmoid. Being differentiable in the
prompt coordinates, it supports exact gradients; external backends fall
back to central finite differences.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .masks import BCE_EPS, FULL_BCE, ONE_SIDED, BinaryMask, Image, SoftMask, bce_loss
from .points import PromptPoint, PromptSet

# Central-difference step for backends without exact gradients, in pixels.
FD_STEP = 0.5


class PromptableSegmentor(abc.ABC):
    """Contract every segmentation backend implements."""

    name: str = "segmentor"
    #: True when coord_gradient computes exact derivatives; False means
    #: callers should expect the finite-difference fallback.
    analytic_gradient: bool = False

    @abc.abstractmethod
    def predict(self, image: Image, prompts: PromptSet) -> SoftMask:
        """Probability mask for the prompts; needs >= 1 positive point."""


@dataclass(frozen=True)
class OracleParams:
    sigma: float = 12.0  # influence radius of a point, in pixels
    gamma: float = 4.0  # prompt field strength
    beta: float = 2.0  # image affinity strength

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def _require_positive(prompts: PromptSet):
    if not any(p.positive for p in prompts):
        raise ValueError("predict needs at least one positive point")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _dloss_dlogit(s: np.ndarray, target: np.ndarray, kind: str) -> np.ndarray:
    """Per-pixel derivative of the mean BCE loss w.r.t. the logit.

    Pixels whose probability falls outside the clamp window contribute a
    constant to the loss, hence zero derivative; that matches what a
    finite difference of the clamped loss sees.
    """
    n = s.size
    in_range = (s > BCE_EPS) & (s < 1.0 - BCE_EPS)
    t = target.astype(float)
    if kind == FULL_BCE:
        d = s - t
    elif kind == ONE_SIDED:
        d = -t * (1.0 - s)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return np.where(in_range, d, 0.0) / n


class AnalyticOracle(PromptableSegmentor):
    """Differentiable Gaussian-field segmentor with exact coordinate gradients."""

    name = "analytic-oracle"
    analytic_gradient = True

    # Optimizer anchors repeat the same coordinates every step, so their
    # fields are memoized per instance; moving points simply miss.
    _CACHE_LIMIT = 512

    def __init__(self, params: OracleParams = OracleParams()):
        self.params = params
        self._field_cache = {}

    def _field(self, shape, x: float, y: float) -> np.ndarray:
        """(h, w) grid of exp(-d^2 / 2 sigma^2) around one point."""
        key = (shape[0], shape[1], x, y)
        cached = self._field_cache.get(key)
        if cached is not None:
            return cached
        h, w = shape
        two_s2 = 2.0 * self.params.sigma**2
        fx = np.exp(-((np.arange(w, dtype=float) - x) ** 2) / two_s2)
        fy = np.exp(-((np.arange(h, dtype=float) - y) ** 2) / two_s2)
        field = np.multiply.outer(fy, fx)
        if len(self._field_cache) >= self._CACHE_LIMIT:
            self._field_cache.clear()
        self._field_cache[key] = field
        return field

    def _fields(self, shape, prompts: PromptSet) -> np.ndarray:
        """(n, h, w) stack of exp(-d^2 / 2 sigma^2) per prompt."""
        if not len(prompts):
            return np.empty((0, shape[0], shape[1]))
        return np.stack([self._field(shape, p.x, p.y) for p in prompts])

    def _logit_grid(self, image: Image, prompts: PromptSet, fields: np.ndarray) -> np.ndarray:
        signs = np.array([1.0 if p.positive else -1.0 for p in prompts])
        prompt_term = np.tensordot(signs, fields, axes=1) if len(prompts) else 0.0
        return self.params.gamma * prompt_term + self.params.beta * (image.intensity - 0.5)

    def logit_at(self, image: Image, prompts: PromptSet, x: float, y: float) -> float:
        """Logit at a continuous location; intensity is sampled bilinearly."""
        two_s2 = 2.0 * self.params.sigma**2
        total = 0.0
        for p in prompts:
            g = np.exp(-((x - p.x) ** 2 + (y - p.y) ** 2) / two_s2)
            total += g if p.positive else -g
        return float(
            self.params.gamma * total
            + self.params.beta * (_bilinear(image.intensity, x, y) - 0.5)
        )

    def predict(self, image: Image, prompts: PromptSet) -> SoftMask:
        _require_positive(prompts)
        fields = self._fields(image.intensity.shape, prompts)
        return SoftMask(_sigmoid(self._logit_grid(image, prompts, fields)))

    def loss_and_coord_gradient(
        self,
        image: Image,
        prompts: PromptSet,
        target: BinaryMask,
        kind: str = FULL_BCE,
        indices=None,
    ):
        """Mean BCE against ``target`` plus d(loss)/d(x_i, y_i) for ``indices``.

        Returns (loss, (len(indices), 2) array). One forward pass is shared
        between the loss and all gradients.
        """
        _require_positive(prompts)
        indices = list(range(len(prompts))) if indices is None else list(indices)
        fields = self._fields(image.intensity.shape, prompts)
        s = _sigmoid(self._logit_grid(image, prompts, fields))
        loss = bce_loss(SoftMask(s), target, kind)
        dldz = _dloss_dlogit(s, target.bits, kind)

        h, w = image.intensity.shape
        xs = np.arange(w, dtype=float)
        ys = np.arange(h, dtype=float)
        s2 = self.params.sigma**2
        grads = np.zeros((len(indices), 2))
        for row, i in enumerate(indices):
            p = prompts[i]
            sign = 1.0 if p.positive else -1.0
            weight = dldz * (sign * self.params.gamma / s2) * fields[i]
            grads[row, 0] = float((weight * (xs - p.x)[None, :]).sum())
            grads[row, 1] = float((weight * (ys - p.y)[:, None]).sum())
        return loss, grads

    def coord_gradient(
        self,
        image: Image,
        prompts: PromptSet,
        target: BinaryMask,
        kind: str = FULL_BCE,
        indices=None,
    ) -> np.ndarray:
        return self.loss_and_coord_gradient(image, prompts, target, kind, indices)[1]


def _bilinear(arr: np.ndarray, x: float, y: float) -> float:
    """Bilinear sample with border clamping."""
    h, w = arr.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return float(top * (1 - fy) + bot * fy)


def _with_coordinate(prompts: PromptSet, index: int, axis: int, value: float) -> PromptSet:
    pts = list(prompts)
    p = pts[index]
    if axis == 0:
        pts[index] = PromptPoint(value, p.y, p.positive)
    else:
        pts[index] = PromptPoint(p.x, value, p.positive)
    return PromptSet(tuple(pts))


def fd_coord_gradient(
    seg: PromptableSegmentor,
    image: Image,
    prompts: PromptSet,
    target: BinaryMask,
    kind: str = FULL_BCE,
    indices=None,
    step: float = FD_STEP,
) -> np.ndarray:
    """Central-difference d(loss)/d(x_i, y_i): two predicts per coordinate."""
    if indices is None:
        indices = range(len(prompts))
    indices = list(indices)
    grads = np.zeros((len(indices), 2))
    for row, i in enumerate(indices):
        p = prompts[i]
        for axis, base in ((0, p.x), (1, p.y)):
            hi = bce_loss(seg.predict(image, _with_coordinate(prompts, i, axis, base + step)), target, kind)
            lo = bce_loss(seg.predict(image, _with_coordinate(prompts, i, axis, base - step)), target, kind)
            grads[row, axis] = (hi - lo) / (2.0 * step)
    return grads


def coord_gradient(
    seg: PromptableSegmentor,
    image: Image,
    prompts: PromptSet,
    target: BinaryMask,
    kind: str = FULL_BCE,
    indices=None,
) -> np.ndarray:
    """Gradient of the mean BCE w.r.t. prompt coordinates.

    Exact when the backend supports it, otherwise central differences with
    a half-pixel step.
    """
    if seg.analytic_gradient and hasattr(seg, "coord_gradient"):
        return seg.coord_gradient(image, prompts, target, kind, indices)
    return fd_coord_gradient(seg, image, prompts, target, kind, indices)


def loss_and_coord_gradient(
    seg: PromptableSegmentor,
    image: Image,
    prompts: PromptSet,
    target: BinaryMask,
    kind: str = FULL_BCE,
    indices=None,
):
    """(loss, gradient) sharing one forward pass when the backend allows."""
    if hasattr(seg, "loss_and_coord_gradient"):
        return seg.loss_and_coord_gradient(image, prompts, target, kind, indices)
    loss = bce_loss(seg.predict(image, prompts), target, kind)
    return loss, fd_coord_gradient(seg, image, prompts, target, kind, indices)
