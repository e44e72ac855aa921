"""Stability-index arithmetic and one-dimensional symmetric stable sampling.

Normalization used throughout the package: the one-dimensional Lévy density
is ``A_alpha * |w|**(-1 - alpha)``.  With that constant the characteristic
exponent of the unit-time increment is exactly ``|xi|**alpha``, so the
Chambers-Mallows-Stuck transform is used with unit scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StabilityIndex",
    "GeneratorConstants",
    "compute_A_alpha",
    "compute_A_tilde_alpha",
    "generator_constants",
    "tail_constant",
    "sample_standard_stable",
    "sample_increment",
    "cms_transform",
]


@dataclass(frozen=True)
class StabilityIndex:
    """An index ``alpha`` in the open interval (0, 2)."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a < 2.0) or math.isnan(a):
            raise ValueError(f"stability index must lie in (0, 2), got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    def __float__(self) -> float:
        return self.alpha


def _alpha(alpha) -> float:
    if isinstance(alpha, StabilityIndex):
        return alpha.alpha
    return StabilityIndex(alpha).alpha


@dataclass(frozen=True)
class GeneratorConstants:
    alpha: float
    a_alpha: float
    a_tilde_alpha: float


def compute_A_alpha(alpha) -> float:
    """Kernel constant ``alpha 2**(alpha-1) Gamma((1+alpha)/2) / (sqrt(pi) Gamma(1-alpha/2))``."""
    a = _alpha(alpha)
    log_val = (
        math.log(a)
        + (a - 1.0) * math.log(2.0)
        - 0.5 * math.log(math.pi)
        + math.lgamma((1.0 + a) / 2.0)
        - math.lgamma(1.0 - a / 2.0)
    )
    return math.exp(log_val)


def compute_A_tilde_alpha(alpha) -> float:
    """``2**alpha Gamma((1+alpha)/2) Gamma(1+alpha/2) / sqrt(pi)``.

    This is minus the value of the one-directional operator applied to
    ``(r^2 - |y|^2)_+^{alpha/2}`` inside the ball.
    """
    a = _alpha(alpha)
    log_val = (
        a * math.log(2.0)
        - 0.5 * math.log(math.pi)
        + math.lgamma((1.0 + a) / 2.0)
        + math.lgamma(1.0 + a / 2.0)
    )
    return math.exp(log_val)


def generator_constants(alpha) -> GeneratorConstants:
    a = _alpha(alpha)
    return GeneratorConstants(a, compute_A_alpha(a), compute_A_tilde_alpha(a))


def tail_constant(alpha) -> float:
    """Lévy mass of ``{|w| > 1}``; the tail is ``tail_constant * t**-alpha``."""
    a = _alpha(alpha)
    return 2.0 * compute_A_alpha(a) / a


def cms_transform(alpha: float, v, w):
    """Chambers-Mallows-Stuck map for the symmetric case.

    ``v`` uniform on (-pi/2, pi/2), ``w`` standard exponential.  Returns
    variates with characteristic function ``exp(-|xi|**alpha)``.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if alpha == 1.0:
        return np.tan(v)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_standard_stable(alpha, rng: np.random.Generator, size=None):
    """Draw standard symmetric stable variates (Lévy density ``A_alpha |w|^{-1-alpha}``)."""
    a = _alpha(alpha)
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size=size)
    w = rng.standard_exponential(size=size)
    out = cms_transform(a, v, w)
    if size is None:
        return float(out)
    return out


def sample_increment(alpha, dt: float, rng: np.random.Generator, size=None):
    """Increment of the stable process over a time span ``dt`` (self-similar scaling)."""
    if not dt > 0:
        raise ValueError(f"time span must be positive, got {dt!r}")
    a = _alpha(alpha)
    return dt ** (1.0 / a) * sample_standard_stable(a, rng, size=size)
