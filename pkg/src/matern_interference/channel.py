"""Path gain and Nakagami-m power fading."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NO_FADING = math.inf


@dataclass(frozen=True)
class ChannelParams:
    alpha: float
    m: float = 1.0

    def __post_init__(self):
        validate_alpha(self.alpha)
        validate_m(self.m)


def validate_alpha(alpha):
    if not alpha > 2:
        raise ValueError(f"path-loss exponent must exceed 2, got {alpha}")


def validate_m(m):
    # m < 1/2 is outside the Nakagami family's physical range
    if not m >= 0.5:
        raise ValueError(f"Nakagami parameter must be >= 1/2, got {m}")


def path_gain(distance, alpha):
    """min(1, distance**-alpha); equals 1 inside the unit disc."""
    r = np.asarray(distance, dtype=float)
    with np.errstate(divide="ignore"):
        g = np.where(r <= 1.0, 1.0, r ** -alpha)
    return g if g.ndim else float(g)


def sample_fading(m, rng, size=None):
    """Power fading coefficient h^2 ~ Gamma(m, 1/m).

    ``m = inf`` means no fading and returns ones.
    """
    if not m > 0:
        raise ValueError("fading shape must be positive")
    if math.isinf(m):
        return 1.0 if size is None else np.ones(size)
    return rng.gamma(m, 1.0 / m, size)


def fading_moment2(m):
    """E[h^4] = (m + 1) / m for unit-mean gamma fading."""
    if not m > 0:
        raise ValueError("fading shape must be positive")
    if math.isinf(m):
        return 1.0
    return (m + 1.0) / m
