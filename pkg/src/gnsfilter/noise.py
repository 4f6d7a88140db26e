"""Symmetric alpha-stable noise and its fractional lower-order moments.

Parameterization: characteristic function ``exp(-gamma * |theta|**alpha)``,
so ``gamma`` is the dispersion and the scale is ``gamma ** (1 / alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn


class MomentUndefinedError(ValueError):
    """Raised when the requested absolute moment is infinite."""


@dataclass(frozen=True)
class AlphaStableParams:
    alpha: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def scale(self) -> float:
        return self.gamma ** (1.0 / self.alpha)

    @classmethod
    def from_convention(cls, alpha: float, value: float, convention: str = "dispersion"):
        """Build params from either a dispersion or a scale value."""
        if convention == "dispersion":
            return cls(alpha, value)
        if convention == "scale":
            return cls(alpha, value**alpha)
        raise ValueError(f"unknown gamma convention {convention!r}")


@dataclass(frozen=True)
class NoiseRealization:
    samples: np.ndarray
    seed: int | None


def standard_sas(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with characteristic function exp(-|theta|**alpha)."""
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    w = rng.exponential(1.0, size=size)
    if alpha == 1.0:
        return np.tan(v)
    cos_v = np.cos(v)
    x = np.sin(alpha * v) / cos_v ** (1.0 / alpha)
    x *= (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    return x


def sample_sas(params: AlphaStableParams, count, rng_seed: int | None = None, rng=None) -> NoiseRealization:
    """Draw i.i.d. SαS samples.

    ``count`` may be an int or a shape tuple. Pass either a seed or an existing
    generator; the generator wins if both are given.
    """
    if rng is None:
        rng = np.random.default_rng(rng_seed)
    x = params.scale * standard_sas(params.alpha, count, rng)
    # v = +-pi/2 exactly has probability ~0 but would give inf
    bad = ~np.isfinite(x)
    while np.any(bad):
        x[bad] = params.scale * standard_sas(params.alpha, int(bad.sum()), rng)
        bad = ~np.isfinite(x)
    return NoiseRealization(samples=x, seed=rng_seed)


def flom(params: AlphaStableParams, p: float) -> float:
    """E|X|**p for 0 < p < alpha (p < 2)."""
    if not 0.0 < p < params.alpha or p >= 2.0:
        raise MomentUndefinedError(f"E|X|^{p} is infinite for alpha = {params.alpha}")
    a = params.alpha
    c = 2.0**p * gamma_fn((1.0 + p) / 2.0) * gamma_fn(1.0 - p / a)
    c /= np.sqrt(np.pi) * gamma_fn(1.0 - p / 2.0)
    return float(c * params.gamma ** (p / a))


def flom_abs_moment(params: AlphaStableParams) -> float:
    """First absolute moment, ``(2/pi) Gamma(1 - 1/alpha) gamma**(1/alpha)``."""
    if params.alpha <= 1.0:
        raise MomentUndefinedError(f"E|X| is infinite for alpha = {params.alpha} <= 1")
    a = params.alpha
    return float(2.0 / np.pi * gamma_fn(1.0 - 1.0 / a) * params.gamma ** (1.0 / a))


def estimate_abs_moment_empirical(samples) -> float:
    if isinstance(samples, NoiseRealization):
        samples = samples.samples
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    return float(np.mean(np.abs(x)))
