"""Negative-prompt refinement.

Good negative prompts live in the background region that a segmentor is
most likely to confuse with the target. Rather than guessing them, we pose
the complementary problem: flip the known positives to negatives, drop a
few provisional positives into the allowed background region, and optimize
those provisional points so the segmentor reproduces that region. Flipping
the optimized set back yields hard negative prompts for the original task.

Coordinates are optimized in a normalized space (x / (w-1), y / (h-1)) so
step sizes are resolution-independent; prompts handed to the segmentor are
always in pixels.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .adamw import AdamWState, OptimizerConfig, adamw_step
from .errors import NoForegroundError, NonFiniteGradientError
from .masks import BinaryMask, Image
from .points import PromptPoint, PromptSet, flip_polarity
from .segmentor import PromptableSegmentor, loss_and_coord_gradient

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineTrace:
    """Per-run optimization record.

    ``losses[0]`` is the loss at the initial coordinates; each later entry
    follows one optimizer step, so ``len(losses) == steps + 1``.
    """

    losses: tuple
    grad_norms: tuple
    steps: int
    converged: bool
    final_prompts: PromptSet
    warnings: tuple = field(default_factory=tuple)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "grad_norm"])
            for i, loss in enumerate(self.losses):
                gn = self.grad_norms[i] if i < len(self.grad_norms) else ""
                writer.writerow([i, f"{loss:.9f}", f"{gn:.9f}" if gn != "" else ""])


def _background_pixels(background: BinaryMask) -> np.ndarray:
    ys, xs = np.nonzero(background.bits)
    if xs.size == 0:
        raise NoForegroundError("background region has no pixels to sample")
    return np.column_stack([xs, ys]).astype(float)


def random_negative_points(background: BinaryMask, k: int, seed: int) -> PromptSet:
    """k distinct background pixels tagged negative, sampled uniformly."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = _background_pixels(background)
    rng = np.random.default_rng(seed)
    if pts.shape[0] <= k:
        order = rng.permutation(pts.shape[0])
        chosen = pts[order]
    else:
        idx = rng.choice(pts.shape[0], size=k, replace=False)
        chosen = pts[idx]
    return PromptSet(tuple(PromptPoint(x, y, False) for x, y in chosen))


def init_complementary(positives: PromptSet, background: BinaryMask, seed: int) -> PromptSet:
    """Starting prompts for the complementary problem.

    The given positives come back polarity-flipped (anchors), followed by
    an equal number of background pixels sampled without replacement and
    tagged positive (the candidates to optimize). A background region with
    fewer pixels than requested yields fewer candidates, with a warning.
    """
    if len(positives) == 0 or not all(p.positive for p in positives):
        raise ValueError("init_complementary expects a nonempty all-positive set")
    flipped = flip_polarity(positives)
    k = len(positives)
    pts = _background_pixels(background)
    rng = np.random.default_rng(seed)
    if pts.shape[0] < k:
        logger.warning(
            "background has %d pixels, fewer than the %d candidates requested",
            pts.shape[0],
            k,
        )
        order = rng.permutation(pts.shape[0])
        chosen = pts[order]
    else:
        idx = rng.choice(pts.shape[0], size=k, replace=False)
        chosen = pts[idx]
    candidates = tuple(PromptPoint(x, y, True) for x, y in chosen)
    return PromptSet(tuple(flipped) + candidates)


def refine_negative_points(
    image: Image,
    init: PromptSet,
    background: BinaryMask,
    seg: PromptableSegmentor,
    cfg: OptimizerConfig = OptimizerConfig(),
):
    """Optimize the complementary problem and flip the result back.

    ``init`` is an init_complementary-style set: negative anchors (frozen
    unless cfg.optimize_anchors) plus positive candidates whose coordinates
    are moved by AdamW to minimize BCE against ``background``. Returns
    (prompts, trace) where prompts restore the original polarity: anchors
    positive again, optimized candidates negative.

    Stops at cfg.max_steps, or earlier once the loss delta has stayed below
    cfg.converge_tol for cfg.converge_patience consecutive steps (a run
    whose every step so far is below tolerance also counts as converged).
    """
    anchors = [p for p in init if not p.positive]
    candidates = [p for p in init if p.positive]
    if not candidates:
        raise ValueError("refinement needs at least one positive candidate")
    if cfg.optimize_anchors:
        fixed, movable = [], anchors + candidates
    else:
        fixed, movable = anchors, candidates
    polarity = [p.positive for p in movable]

    w, h = image.width, image.height
    scale = np.array([w - 1.0, h - 1.0])

    def assemble(coords_px: np.ndarray) -> PromptSet:
        moved = tuple(
            PromptPoint(float(x), float(y), pol).clamped(w, h)
            for (x, y), pol in zip(coords_px, polarity)
        )
        return PromptSet(tuple(fixed) + moved)

    coords_px = np.array([[p.x, p.y] for p in movable], dtype=float)
    coords_n = coords_px / scale
    movable_idx = list(range(len(fixed), len(fixed) + len(movable)))

    state = AdamWState.zeros(coords_n.shape)
    losses = []
    grad_norms = []
    warnings = []

    prompts = assemble(coords_n * scale)
    loss, grad_px = loss_and_coord_gradient(
        seg, image, prompts, background, cfg.loss, movable_idx
    )
    if not np.isfinite(loss):
        raise NonFiniteGradientError("initial loss is non-finite")
    losses.append(float(loss))
    grad_norms.append(float(np.linalg.norm(grad_px * scale)))

    converged = False
    steps = 0
    streak = 0
    for t in range(1, cfg.max_steps + 1):
        grad_n = grad_px * scale
        state, coords_n = adamw_step(state, coords_n, grad_n, cfg, bounds=(0.0, 1.0))
        prompts = assemble(coords_n * scale)
        loss, grad_px = loss_and_coord_gradient(
            seg, image, prompts, background, cfg.loss, movable_idx
        )
        if not np.isfinite(loss):
            raise NonFiniteGradientError(
                f"loss became non-finite at step {t}",
                trace=RefineTrace(
                    tuple(losses), tuple(grad_norms), t, False, prompts, tuple(warnings)
                ),
            )
        losses.append(float(loss))
        grad_norms.append(float(np.linalg.norm(grad_px * scale)))
        steps = t
        if abs(losses[-1] - losses[-2]) < cfg.converge_tol:
            streak += 1
        else:
            streak = 0
        if streak >= min(cfg.converge_patience, t):
            converged = True
            break

    refined = flip_polarity(prompts)
    trace = RefineTrace(
        tuple(losses), tuple(grad_norms), steps, converged, refined, tuple(warnings)
    )
    return refined, trace
