"""Observation noise: sampling and per-observation log-densities.

``gaussian`` is additive, ``obs = clean + N(0, sigma^2)``.
``lognormal`` is multiplicative, ``obs = clean * eta`` with
``log(eta) ~ N(0, sigma^2)``; its density is that of the observation itself,
so it includes the ``-log(obs)`` Jacobian term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

GAUSSIAN = "gaussian"
LOGNORMAL = "lognormal"
KINDS = (GAUSSIAN, LOGNORMAL)

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    sigma: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; choose from {KINDS}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; identical seeds give identical samples."""
    return np.random.Generator(np.random.PCG64(seed))


def sample(noise: NoiseModel, clean_value, rng: np.random.Generator):
    """Corrupt ``clean_value`` (scalar or array) with one noise draw per entry."""
    clean = np.asarray(clean_value, dtype=float)
    if noise.kind == LOGNORMAL and np.any(clean <= 0):
        raise DomainError("multiplicative log-normal noise needs strictly positive clean values")
    z = rng.standard_normal(clean.shape)
    if noise.kind == GAUSSIAN:
        out = clean + noise.sigma * z
    else:
        out = clean * np.exp(noise.sigma * z)
    return float(out) if out.ndim == 0 else out


def log_density(noise: NoiseModel, observed, predicted):
    """Log-density of ``observed`` given the noise-free ``predicted`` value."""
    x = np.asarray(observed, dtype=float)
    mu = np.asarray(predicted, dtype=float)
    s = noise.sigma
    if noise.kind == GAUSSIAN:
        out = -_HALF_LOG_2PI - np.log(s) - 0.5 * ((x - mu) / s) ** 2
    else:
        if np.any(x <= 0) or np.any(mu <= 0):
            raise DomainError("log-normal density needs positive observed and predicted values")
        lx = np.log(x)
        out = -_HALF_LOG_2PI - np.log(s) - lx - 0.5 * ((lx - np.log(mu)) / s) ** 2
    return float(out) if out.ndim == 0 else out
