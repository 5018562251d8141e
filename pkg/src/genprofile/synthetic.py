"""Noisy samples of a model's exact (or RK4) trajectory."""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .models import FullParameterVector, ModelSpec, solve
from .noise import GAUSSIAN, NoiseModel, make_rng
from .profiling import Dataset


def simulate_dataset(model: ModelSpec, theta, initial, sigma: float, times,
                     noise_kind: str = GAUSSIAN, seed: int = 0, comments=()) -> Dataset:
    """One independent noise draw per observation from a PCG64 stream.

    Draws are taken species by species in time order. Under log-normal noise
    a clean value of exactly zero yields an observation of zero, the limit of
    ``clean * eta``; negative clean values are rejected.
    """
    noise = NoiseModel(noise_kind, sigma)
    times = np.asarray(times, dtype=float)
    clean = solve(model, FullParameterVector(theta, initial, sigma), times)
    z = make_rng(seed).standard_normal(clean.shape)
    if noise.kind == GAUSSIAN:
        values = clean + noise.sigma * z
    else:
        if np.any(clean < 0):
            raise DomainError("log-normal noise needs non-negative clean values")
        values = clean * np.exp(noise.sigma * z)
    return Dataset(times, values, model.species_names, tuple(comments))
