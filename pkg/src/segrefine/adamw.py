"""A small, pure-functional AdamW update for point coordinates.

State and parameters are plain arrays; every step returns fresh copies so
traces stay reproducible and steps are trivially testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradientError


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 4e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Decoupled decay pulls coordinates toward the origin, which has no
    # spatial meaning, so it defaults off.
    weight_decay: float = 0.0
    max_steps: int = 100
    converge_tol: float = 1e-5
    converge_patience: int = 5
    # When False (the default), flipped anchor points stay frozen during
    # refinement and only candidate points move.
    optimize_anchors: bool = False
    loss: str = "full_bce"

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ValueError("bad optimizer hyperparameters")
        if self.max_steps < 1 or self.converge_patience < 1:
            raise ValueError("max_steps and converge_patience must be >= 1")


@dataclass(frozen=True)
class AdamWState:
    m: np.ndarray  # first-moment estimate, same shape as the parameters
    v: np.ndarray  # second-moment estimate
    t: int  # completed steps

    @staticmethod
    def zeros(shape) -> "AdamWState":
        return AdamWState(np.zeros(shape), np.zeros(shape), 0)


def adamw_step(
    state: AdamWState,
    coords: np.ndarray,
    grads: np.ndarray,
    cfg: OptimizerConfig,
    bounds=None,
):
    """One AdamW update; returns (new_state, new_coords).

    Bias-corrected moments drive the step and weight decay is decoupled
    from the gradient. ``bounds`` as (lo, hi) arrays or scalars clamps the
    updated coordinates elementwise.
    """
    g = np.asarray(grads, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("gradient contains non-finite components")
    if g.shape != coords.shape:
        raise ValueError(f"gradient shape {g.shape} != parameter shape {coords.shape}")

    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new = coords - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps) - cfg.lr * cfg.weight_decay * coords
    if bounds is not None:
        lo, hi = bounds
        new = np.clip(new, lo, hi)
    return AdamWState(m, v, t), new
