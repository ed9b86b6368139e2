"""Per-step gradient privacy: global L2 clipping plus Gaussian noise.

The update applied is ``theta - rate * (clipped_gradient + noise)`` with
the noise standard deviation calibrated from the per-step budget by the
Gaussian mechanism, ``C * sqrt(2 ln(1.25/delta)) / epsilon``. Budget
composition across steps is reported naively (steps times per-step
epsilon) in run manifests and labeled as such; no moments accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .nets import (
    GradientSet,
    NetworkParameters,
    RngStream,
    apply_update,
    grad_l2_norm,
    scale_grads,
)


@dataclass(frozen=True)
class DpConfig:
    """Per-step privacy budget and mechanism calibration.

    epsilon is the per-step budget; delta and clip_norm calibrate the
    Gaussian mechanism. explicit_noise_std, when set, bypasses the
    calibration entirely.
    """

    epsilon: float
    delta: float = 1e-5
    clip_norm: float = 1.0
    explicit_noise_std: float | None = None

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.explicit_noise_std is not None and self.explicit_noise_std < 0:
            raise ValueError("explicit_noise_std must be >= 0")


def clip_gradient(grads: GradientSet, clip_norm: float) -> GradientSet:
    """Scale the whole gradient down to global L2 norm clip_norm if above.

    Below the bound the arrays pass through unscaled, so the zero-noise
    reduction stays bit-exact.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be > 0")
    norm = grad_l2_norm(grads)
    if norm <= clip_norm:
        return grads
    return scale_grads(grads, clip_norm / norm)


def noise_std_from_epsilon(cfg: DpConfig) -> float:
    """Gaussian-mechanism noise scale for one step at sensitivity clip_norm."""
    if cfg.explicit_noise_std is not None:
        return cfg.explicit_noise_std
    return cfg.clip_norm * math.sqrt(2.0 * math.log(1.25 / cfg.delta)) / cfg.epsilon


def dp_step(
    params: NetworkParameters,
    grads: GradientSet,
    learning_rate: float,
    cfg: DpConfig,
    rng: RngStream,
) -> NetworkParameters:
    """One descent step on the clipped, noise-perturbed gradient.

    Noise is added after clipping and before the learning-rate
    multiplication: theta - rate * (clipped + noise).
    """
    clipped = clip_gradient(grads, cfg.clip_norm)
    std = noise_std_from_epsilon(cfg)
    noisy = [
        (dw + rng.normal(0.0, std, size=dw.shape), db + rng.normal(0.0, std, size=db.shape))
        for dw, db in clipped
    ]
    return apply_update(params, noisy, -learning_rate)


def naive_composed_epsilon(steps: int, cfg: DpConfig) -> float:
    """Steps times per-step epsilon; a deliberately naive upper tally."""
    return float(steps) * cfg.epsilon
