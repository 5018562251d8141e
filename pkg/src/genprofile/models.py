"""ODE models: right-hand sides, closed-form solutions and an RK4 reference.

States are arrays of shape ``(S,)`` or ``(S, n)``; right-hand sides broadcast
over the trailing axis so the same callable serves a single time point or a
whole enforcement grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, InvalidModelError

RATE_BOUNDS = (1e-6, 10.0)
AMBIENT_BOUNDS = (-273.15, 1000.0)
CAPACITY_BOUNDS = (1e-3, 1e5)
SIGMA_BOUNDS = (1e-6, 1e3)


@dataclass(frozen=True)
class ModelSpec:
    """An ODE ``dy/dt = rhs(t, y, params)`` with named parameters.

    ``param_names`` lists the ODE parameters only; the noise scale and the
    initial state are handled separately. ``initial_guess`` maps observed
    ``(times, values)`` to a starting parameter vector for the optimizer.
    """

    name: str
    dimension: int
    param_names: tuple
    param_bounds: tuple
    rhs: Callable
    exact_solution: Optional[Callable] = None
    species_names: tuple = ()
    initial_guess: Optional[Callable] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidModelError("model dimension must be positive")
        object.__setattr__(self, "param_names", tuple(self.param_names))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.param_bounds)
        if len(bounds) != len(self.param_names):
            raise InvalidModelError("one (lower, upper) pair is required per parameter")
        for name, (lo, hi) in zip(self.param_names, bounds):
            if not lo < hi:
                raise InvalidModelError(f"bounds for {name!r} must satisfy lower < upper")
        object.__setattr__(self, "param_bounds", bounds)
        species = tuple(self.species_names) or tuple(f"y{s + 1}" for s in range(self.dimension))
        if len(species) != self.dimension:
            raise InvalidModelError("species_names length must equal the model dimension")
        object.__setattr__(self, "species_names", species)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def evaluate_rhs(self, t, state, params) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape[0] != self.dimension:
            raise InvalidModelError(
                f"{self.name}: state has {state.shape[0]} components, expected {self.dimension}"
            )
        out = np.asarray(self.rhs(t, state, np.asarray(params, dtype=float)), dtype=float)
        if out.shape[0] != self.dimension:
            raise InvalidModelError(
                f"{self.name}: rhs returned {out.shape[0]} components, expected {self.dimension}"
            )
        return out

    def guess(self, times, values) -> np.ndarray:
        lo = np.array([b[0] for b in self.param_bounds])
        hi = np.array([b[1] for b in self.param_bounds])
        if self.initial_guess is None:
            x = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 1.0)
        else:
            x = np.asarray(self.initial_guess(np.asarray(times), np.asarray(values)), dtype=float)
        return np.clip(x, lo, hi)


@dataclass(frozen=True)
class FullParameterVector:
    ode_params: np.ndarray
    initial_state: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ode_params", np.atleast_1d(np.asarray(self.ode_params, float)))
        object.__setattr__(self, "initial_state", np.atleast_1d(np.asarray(self.initial_state, float)))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


# -- right-hand sides ---------------------------------------------------------

def rhs_newton(t, T, alpha, T_a):
    return -alpha * (T - T_a)


def rhs_logistic(t, C, lam, kappa):
    return lam * C * (1.0 - C / kappa)


def rhs_chain(t, C, rates) -> np.ndarray:
    """Sequential first-order decay ``C1 -> C2 [-> C3]``."""
    C = np.asarray(C, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if C.shape[0] != rates.size or rates.size not in (2, 3):
        raise InvalidModelError(
            f"chain model needs matching state/rate sizes of 2 or 3, got {C.shape[0]} and {rates.size}"
        )
    out = np.empty_like(C)
    out[0] = -rates[0] * C[0]
    for s in range(1, rates.size):
        out[s] = rates[s - 1] * C[s - 1] - rates[s] * C[s]
    return out


# -- closed forms -------------------------------------------------------------

def phi_expm1(x):
    """``(exp(x) - 1) / x`` without cancellation; equals 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    safe = np.where(small, 1.0, x)
    series = 1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    return np.where(small, series, np.expm1(safe) / safe)


def exact_newton(t, full: FullParameterVector):
    alpha, T_a = full.ode_params
    T0 = full.initial_state[0]
    return (T0 - T_a) * np.exp(-alpha * np.asarray(t, dtype=float)) + T_a


def exact_logistic(t, full: FullParameterVector):
    lam, kappa = full.ode_params
    C0 = full.initial_state[0]
    return kappa * C0 / (C0 + (kappa - C0) * np.exp(-lam * np.asarray(t, dtype=float)))


def exact_chain2(t, full: FullParameterVector) -> np.ndarray:
    """Two-species decay chain, shape ``(2,) + shape(t)``.

    Both the ``r1 != r2`` and ``r1 == r2`` branches are the single expression
    ``C2 = e^{-r2 t} (C2(0) + r1 C1(0) t phi(-(r1 - r2) t))``, which stays
    accurate as the rates coincide.
    """
    r1, r2 = full.ode_params[:2]
    c10, c20 = full.initial_state[:2]
    t = np.asarray(t, dtype=float)
    c1 = c10 * np.exp(-r1 * t)
    c2 = np.exp(-r2 * t) * (c20 + r1 * c10 * t * phi_expm1(-(r1 - r2) * t))
    return np.stack([c1, c2])


# -- RK4 reference --------------------------------------------------------------

def rk4_solve(model: ModelSpec, full: FullParameterVector, t_grid, step: float = 0.01) -> np.ndarray:
    """Classical fourth-order Runge-Kutta trajectory sampled at ``t_grid``.

    Each gap between consecutive output times is split into equal substeps no
    longer than ``step``. Returns shape ``(S, len(t_grid))``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    y = np.array(full.initial_state, dtype=float)
    if y.size != model.dimension:
        raise InvalidModelError(f"initial state has {y.size} entries, model needs {model.dimension}")
    params = full.ode_params
    f = model.evaluate_rhs
    out = np.empty((model.dimension, t_grid.size))
    out[:, 0] = y
    for k in range(1, t_grid.size):
        t0, t1 = t_grid[k - 1], t_grid[k]
        n = max(1, math.ceil((t1 - t0) / step - 1e-9))
        h = (t1 - t0) / n
        t = t0
        for _ in range(n):
            k1 = f(t, y, params)
            k2 = f(t + 0.5 * h, y + 0.5 * h * k1, params)
            k3 = f(t + 0.5 * h, y + 0.5 * h * k2, params)
            k4 = f(t + h, y + h * k3, params)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"RK4 state became non-finite at t={t1}")
        out[:, k] = y
    return out


def solve(model: ModelSpec, full: FullParameterVector, t) -> np.ndarray:
    """Closed form when available, otherwise RK4; shape ``(S, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if model.exact_solution is not None:
        return np.atleast_2d(model.exact_solution(t, full.ode_params, full.initial_state))
    return rk4_solve(model, full, t)


# -- built-in registry -----------------------------------------------------------

def _span(times):
    return max(float(times[-1] - times[0]), 1e-12)


def _newton_guess(times, values):
    y = values[0]
    return [1.0 / _span(times), float(y[-1])]


def _logistic_guess(times, values):
    y = values[0]
    return [10.0 / _span(times), float(np.max(y))]


def _chain_guess(n):
    def guess(times, values):
        return [(n + 1 - s) / _span(times) for s in range(n)]

    return guess


def _wrap_exact(fn, n_state=1):
    def exact(t, params, initial_state):
        out = fn(t, FullParameterVector(params, initial_state))
        return out if n_state > 1 else np.asarray(out)[None, ...]

    return exact


NEWTON = ModelSpec(
    name="newton",
    dimension=1,
    param_names=("alpha", "T_a"),
    param_bounds=(RATE_BOUNDS, AMBIENT_BOUNDS),
    rhs=lambda t, y, p: rhs_newton(t, y[:1], p[0], p[1]),
    exact_solution=_wrap_exact(exact_newton),
    species_names=("T",),
    initial_guess=_newton_guess,
)

LOGISTIC = ModelSpec(
    name="logistic",
    dimension=1,
    param_names=("lambda", "kappa"),
    param_bounds=(RATE_BOUNDS, CAPACITY_BOUNDS),
    rhs=lambda t, y, p: rhs_logistic(t, y[:1], p[0], p[1]),
    exact_solution=_wrap_exact(exact_logistic),
    species_names=("C",),
    initial_guess=_logistic_guess,
)

CHAIN2 = ModelSpec(
    name="chain2",
    dimension=2,
    param_names=("r1", "r2"),
    param_bounds=(RATE_BOUNDS, RATE_BOUNDS),
    rhs=lambda t, y, p: rhs_chain(t, y, p),
    exact_solution=_wrap_exact(exact_chain2, n_state=2),
    species_names=("C1", "C2"),
    initial_guess=_chain_guess(2),
)

CHAIN3 = ModelSpec(
    name="chain3",
    dimension=3,
    param_names=("r1", "r2", "r3"),
    param_bounds=(RATE_BOUNDS, RATE_BOUNDS, RATE_BOUNDS),
    rhs=lambda t, y, p: rhs_chain(t, y, p),
    species_names=("C1", "C2", "C3"),
    initial_guess=_chain_guess(3),
)

MODELS: dict[str, ModelSpec] = {}


def register_model(model: ModelSpec, replace: bool = False) -> ModelSpec:
    if model.name in MODELS and not replace:
        raise InvalidModelError(f"model {model.name!r} is already registered")
    MODELS[model.name] = model
    return model


def get_model(name: str) -> ModelSpec:
    try:
        return MODELS[name]
    except KeyError:
        raise InvalidModelError(
            f"unknown model {name!r}; choose from {', '.join(sorted(MODELS))}"
        ) from None


for _m in (NEWTON, LOGISTIC, CHAIN2, CHAIN3):
    register_model(_m)
