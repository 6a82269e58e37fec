"""Linear interpolation between pre-trained and fine-tuned head parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .head import HeadParameters


@dataclass(frozen=True)
class MergeConfig:
    """Interpolation weight toward the pre-trained side."""

    alpha: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def interpolate(theta_pre: HeadParameters, theta_ft: HeadParameters,
                cfg: MergeConfig) -> HeadParameters:
    """Elementwise alpha * pre + (1 - alpha) * ft over every trainable tensor.

    The endpoints return exact copies of the corresponding input, bit for bit.
    """
    mismatched = [
        name for name in ("gamma", "beta", "W")
        if getattr(theta_pre, name).shape != getattr(theta_ft, name).shape
    ]
    if mismatched:
        raise ValueError(f"parameter shape mismatch in tensors: {', '.join(mismatched)}")

    if cfg.alpha == 1.0:
        return theta_pre.copy()
    if cfg.alpha == 0.0:
        return theta_ft.copy()

    a = cfg.alpha
    blend = lambda p, f: a * p + (1.0 - a) * f
    return HeadParameters(
        gamma=blend(theta_pre.gamma, theta_ft.gamma),
        beta=blend(theta_pre.beta, theta_ft.beta),
        W=blend(theta_pre.W, theta_ft.W),
        log_t=blend(np.float64(theta_pre.log_t), np.float64(theta_ft.log_t)),
        b=blend(np.float64(theta_pre.b), np.float64(theta_ft.b)),
    )
