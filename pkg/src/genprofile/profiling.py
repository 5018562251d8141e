"""Generalized profiling (parameter cascading) for ODE models.

A spline ``f_s`` per species is fitted to the data and then repeatedly
re-fitted against a stacked least-squares system that trades data matching
against enforcement of the ODE on a fine grid. Between spline updates the
ODE parameters (and, from the second round on, the noise scale) are
re-estimated by Nelder-Mead. The ODE itself is never solved.

Schedule with ``iterations = n``:

    round 0   interpolate the data; ODE parameters maximize the model loss;
              weights (1, |1/l_m|)
    round k   spline update with the previous weights; weights
              (|1/l_d|, |1/l_m|) at the new splines; ODE parameters and
              sigma maximize w_d * l_d + w_m * l_m
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import models as _models
from .errors import DataLossError, DivergenceError, DomainError, FitError, InvalidGridError, InvalidModelError, ProfilingError
from .models import ModelSpec
from .noise import GAUSSIAN, LOGNORMAL, NoiseModel, log_density
from .numerics import Box, OptimizerOptions, least_squares_solve, nelder_mead_max
from .splines import Spline, SplineBasis, collocation, interpolate, make_basis

log = logging.getLogger(__name__)

WEIGHT_CAP = 1e12
DEFAULT_K = 1001


@dataclass(frozen=True)
class Dataset:
    """Observations of ``S`` species on a shared, strictly increasing time grid."""

    times: np.ndarray
    values: np.ndarray
    species_names: tuple = ()
    comments: tuple = ()

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        y = np.array(self.values, dtype=float)
        if y.ndim == 1:
            y = y[None, :]
        if t.ndim != 1 or y.ndim != 2 or y.shape[1] != t.size:
            raise InvalidGridError(f"values shape {y.shape} does not match {t.size} observation times")
        if t.size < 4:
            raise InvalidGridError(f"cubic splines need at least 4 observations, got {t.size}")
        if np.any(np.diff(t) <= 0):
            raise InvalidGridError("observation times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise InvalidGridError("observed values must be finite")
        names = tuple(self.species_names) or tuple(f"y{s + 1}" for s in range(y.shape[0]))
        if len(names) != y.shape[0]:
            raise InvalidGridError("one species name is required per value row")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "species_names", names)
        object.__setattr__(self, "comments", tuple(self.comments))

    @property
    def n_species(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class GridConfig:
    """Times at which the ODE is enforced."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise InvalidGridError("enforcement grid must be a non-empty 1-d array")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def uniform(cls, start: float, stop: float, K: int = DEFAULT_K) -> "GridConfig":
        if K < 2:
            raise InvalidGridError("K must be at least 2")
        return cls(np.linspace(start, stop, K))

    @property
    def K(self) -> int:
        return self.grid.size


@dataclass(frozen=True)
class WeightState:
    w_d: float
    w_m: float

    def __post_init__(self):
        for name in ("w_d", "w_m"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 10
    grid: Optional[GridConfig] = None
    K: int = DEFAULT_K
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    theta0: Optional[Sequence[float]] = None
    bounds: Optional[Box] = None
    sigma_bounds: tuple = _models.SIGMA_BOUNDS
    noise: str = GAUSSIAN
    lognormal_floor: float = 1e-8
    restarts: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")


@dataclass(frozen=True)
class IterationRecord:
    """State after one round; ``sigma`` and ``l_d`` are ``None`` in round 0."""

    theta: np.ndarray
    sigma: Optional[float]
    l_d: Optional[float]
    l_m: float
    penalized: Optional[float]
    weights: WeightState
    weight_losses: tuple
    coefficients: np.ndarray
    xi: np.ndarray
    evals: int


@dataclass(frozen=True)
class FitResult:
    model: str
    noise: str
    param_names: tuple
    species_names: tuple
    splines: tuple
    grid: GridConfig
    records: tuple
    initial_condition_estimates: np.ndarray
    counters: dict
    config: FitConfig
    seed: Optional[int] = None

    @property
    def theta_history(self) -> list:
        return [r.theta for r in self.records]

    @property
    def loss_history(self) -> list:
        return [(r.l_d, r.l_m, r.penalized) for r in self.records]

    @property
    def weight_history(self) -> list:
        return [r.weights for r in self.records]

    @property
    def xi_samples(self) -> np.ndarray:
        """Discrepancy traces, shape ``(rounds, S, K)``."""
        return np.stack([r.xi for r in self.records])

    @property
    def theta(self) -> np.ndarray:
        return self.records[-1].theta

    @property
    def sigma(self) -> Optional[float]:
        return self.records[-1].sigma

    @property
    def complete(self) -> bool:
        return len(self.records) == self.config.iterations + 1


# -- internal helpers -------------------------------------------------------------

class _Workspace:
    """Collocation matrices shared by every species and every round."""

    def __init__(self, basis: SplineBasis, times: np.ndarray, grid: GridConfig):
        self.basis = basis
        self.A = collocation(basis, times).A
        g = collocation(basis, grid.grid)
        self.A_grid = g.A
        self.Ap_grid = g.A_prime
        self.grid = grid


def _coef_matrix(splines: Sequence[Spline]) -> np.ndarray:
    return np.stack([s.coefficients for s in splines])


def _as_splines(basis: SplineBasis, C: np.ndarray) -> tuple:
    return tuple(Spline(basis, c) for c in C)


def _xi_from_values(model: ModelSpec, theta, t, F, dF) -> np.ndarray:
    return dF - model.evaluate_rhs(t, F, theta)


def _check_species(splines, model: ModelSpec):
    if len(splines) != model.dimension:
        raise InvalidModelError(
            f"model {model.name!r} has {model.dimension} species, got {len(splines)} splines"
        )


# -- losses -------------------------------------------------------------------------

def discrepancy(splines: Sequence[Spline], model: ModelSpec, theta, t) -> np.ndarray:
    """``xi_s(t) = f_s'(t) - rhs_s(t, f(t), theta)`` for every species.

    Returns shape ``(S,)`` for scalar ``t`` and ``(S, n)`` for an array.
    """
    _check_species(splines, model)
    scalar = np.ndim(t) == 0
    m = collocation(splines[0].basis, t)
    C = _coef_matrix(splines)
    xi = _xi_from_values(model, theta, m.eval_times, C @ m.A.T, C @ m.A_prime.T)
    return xi[:, 0] if scalar else xi


def model_loss(splines: Sequence[Spline], model: ModelSpec, theta, grid: GridConfig) -> float:
    """``-(1/K) sum_s sum_k xi_s(t_k)^2``; normalized by ``K``, not ``S*K``."""
    xi = discrepancy(splines, model, theta, grid.grid)
    return -float(np.sum(xi * xi)) / grid.K


@dataclass
class _DataTerms:
    terms: np.ndarray
    mask: np.ndarray
    clamped: int


def _data_terms(predicted: np.ndarray, observed: np.ndarray, noise: NoiseModel, floor_rel: float) -> _DataTerms:
    if noise.kind == GAUSSIAN:
        return _DataTerms(log_density(noise, observed, predicted), np.ones(observed.shape, bool), 0)
    if np.any(observed < 0):
        s, j = np.argwhere(observed < 0)[0]
        raise DomainError(f"negative observation at species {s}, index {j} under log-normal noise")
    # exact zeros are the limit of clean * eta at a zero clean value and carry no information
    mask = observed > 0
    floor = floor_rel * np.max(observed, axis=1, keepdims=True)
    floor = np.where(floor > 0, floor, floor_rel)
    low = predicted < floor
    pred = np.where(low, floor, predicted)
    terms = np.zeros(observed.shape)
    terms[mask] = log_density(noise, observed[mask], pred[mask])
    return _DataTerms(terms, mask, int(np.count_nonzero(low & mask)))


def _data_loss_checked(predicted, observed, noise, floor_rel) -> tuple[float, _DataTerms]:
    d = _data_terms(predicted, observed, noise, floor_rel)
    bad = d.mask & ~np.isfinite(d.terms)
    if np.any(bad):
        s, j = np.argwhere(bad)[0]
        raise DataLossError(int(s), int(j), float(d.terms[s, j]))
    return float(np.sum(d.terms[d.mask])), d


def data_loss(splines: Sequence[Spline], dataset: Dataset, noise: NoiseModel, lognormal_floor: float = 1e-8) -> float:
    """Sum of observation log-densities about the spline predictions.

    Under log-normal noise, predictions below ``lognormal_floor`` times the
    species' largest observation are clamped to that floor, and observations
    that are exactly zero are left out.
    """
    if len(splines) != dataset.n_species:
        raise InvalidModelError(f"{len(splines)} splines for {dataset.n_species} species")
    A = collocation(splines[0].basis, dataset.times).A
    pred = _coef_matrix(splines) @ A.T
    return _data_loss_checked(pred, dataset.values, noise, lognormal_floor)[0]


def penalized_loss(l_d: float, l_m: float, w: WeightState) -> float:
    return w.w_d * l_d + w.w_m * l_m


def _reciprocal(loss: float, name: str, cap: float) -> float:
    w = abs(1.0 / loss) if loss != 0.0 else np.inf
    if not w <= cap:
        warnings.warn(f"{name} {loss!r} is (nearly) zero; capping its weight at {cap:g}",
                      RuntimeWarning, stacklevel=3)
        return cap
    return w


def update_weights(l_d: float, l_m: float, first: bool = False, cap: float = WEIGHT_CAP) -> WeightState:
    """Reciprocal-magnitude weights ``(|1/l_d|, |1/l_m|)``.

    ``first=True`` gives the opening weights ``(1, |1/l_m|)``, used before any
    noise scale is available. A weight that would exceed ``cap`` (a loss of
    zero, or one so small that the stacked system loses rank) is set to
    ``cap`` with a warning.
    """
    w_m = _reciprocal(l_m, "model loss", cap)
    w_d = 1.0 if first else _reciprocal(l_d, "data loss", cap)
    return WeightState(w_d, w_m)


# -- spline update --------------------------------------------------------------------

def _stacked(ws: _Workspace, C: np.ndarray, observed: np.ndarray, model: ModelSpec, theta, w: WeightState):
    F = C @ ws.A_grid.T
    b_model = model.evaluate_rhs(ws.grid.grid, F, theta)
    M = np.vstack([w.w_d * ws.A, w.w_m * ws.Ap_grid])
    rhs = np.vstack([w.w_d * observed.T, w.w_m * b_model.T])
    return M, rhs


def stacked_system(splines, dataset: Dataset, model: ModelSpec, theta, w: WeightState, grid: GridConfig):
    """Weighted data rows over model rows: ``M`` is ``(J + K) x J``.

    The right-hand side has one column per species; the model rows use the
    ODE right-hand side evaluated on the current splines.
    """
    _check_species(splines, model)
    ws = _Workspace(splines[0].basis, dataset.times, grid)
    return _stacked(ws, _coef_matrix(splines), dataset.values, model, theta, w)


def spline_update(splines, dataset: Dataset, model: ModelSpec, theta, w: WeightState, grid: GridConfig) -> tuple:
    """One least-squares re-fit of every species' coefficients."""
    M, rhs = stacked_system(splines, dataset, model, theta, w, grid)
    C = least_squares_solve(M, rhs).T
    return _as_splines(splines[0].basis, C)


# -- parameter updates --------------------------------------------------------------

def _ode_box(model: ModelSpec, bounds: Optional[Box]) -> Box:
    return bounds if bounds is not None else Box.from_pairs(model.param_bounds)


def _maximize(objective, x0, box: Box, opts: OptimizerOptions, restarts: int):
    x, fx, evals = nelder_mead_max(objective, box.project(x0), box, opts)
    for _ in range(restarts):
        x2, f2, e2 = nelder_mead_max(objective, x, box, opts)
        evals += e2
        if f2 > fx:
            x, fx = x2, f2
        else:
            break
    return x, fx, evals


def _model_objective(model, grid, F, dF):
    K = grid.K
    t = grid.grid

    def objective(theta):
        xi = dF - model.evaluate_rhs(t, F, theta)
        return -float(np.sum(xi * xi)) / K

    return objective


def optimize_theta_model_only(
    splines,
    model: ModelSpec,
    grid: GridConfig,
    bounds: Optional[Box] = None,
    opts: Optional[OptimizerOptions] = None,
    theta0=None,
    restarts: int = 1,
) -> np.ndarray:
    """ODE parameters maximizing the model loss for fixed splines."""
    return _optimize_model_only(splines, model, grid, bounds, opts, theta0, restarts)[0]


def _optimize_model_only(splines, model, grid, bounds, opts, theta0, restarts):
    _check_species(splines, model)
    box = _ode_box(model, bounds)
    m = collocation(splines[0].basis, grid.grid)
    C = _coef_matrix(splines)
    objective = _model_objective(model, grid, C @ m.A.T, C @ m.A_prime.T)
    if theta0 is None:
        theta0 = 0.5 * (box.lower + box.upper)
    x, _, evals = _maximize(objective, np.asarray(theta0, float), box, opts or OptimizerOptions(), restarts)
    return x, evals


def optimize_theta_penalized(
    splines,
    dataset: Dataset,
    model: ModelSpec,
    noise_kind: str,
    w: WeightState,
    grid: GridConfig,
    bounds: Optional[Box] = None,
    opts: Optional[OptimizerOptions] = None,
    theta0=None,
    sigma_bounds=_models.SIGMA_BOUNDS,
    lognormal_floor: float = 1e-8,
    restarts: int = 1,
) -> np.ndarray:
    """Jointly maximize ``w_d * l_d + w_m * l_m`` over ODE parameters and sigma.

    Returns the ODE parameters with sigma appended as the last entry.
    """
    return _optimize_penalized(
        splines, dataset, model, noise_kind, w, grid, bounds, opts, theta0,
        sigma_bounds, lognormal_floor, restarts,
    )[0]


def _optimize_penalized(splines, dataset, model, noise_kind, w, grid, bounds, opts, theta0,
                        sigma_bounds, lognormal_floor, restarts):
    _check_species(splines, model)
    ode_box = _ode_box(model, bounds)
    box = Box(np.append(ode_box.lower, sigma_bounds[0]), np.append(ode_box.upper, sigma_bounds[1]))
    basis = splines[0].basis
    C = _coef_matrix(splines)
    m = collocation(basis, grid.grid)
    model_obj = _model_objective(model, grid, C @ m.A.T, C @ m.A_prime.T)
    pred = C @ collocation(basis, dataset.times).A.T
    observed = dataset.values

    def objective(x):
        l_m = model_obj(x[:-1])
        try:
            l_d, _ = _data_loss_checked(pred, observed, NoiseModel(noise_kind, x[-1]), lognormal_floor)
        except DataLossError:
            return -np.inf
        return w.w_d * l_d + w.w_m * l_m

    if theta0 is None:
        theta0 = 0.5 * (box.lower + box.upper)
    x, _, evals = _maximize(objective, np.asarray(theta0, float), box, opts or OptimizerOptions(), restarts)
    return x, evals


def initial_sigma(splines, dataset: Dataset, noise_kind: str, lognormal_floor: float = 1e-8) -> float:
    """RMS residual (log-residual under log-normal noise) of splines vs data."""
    A = collocation(splines[0].basis, dataset.times).A
    pred = _coef_matrix(splines) @ A.T
    obs = dataset.values
    if noise_kind == GAUSSIAN:
        r = obs - pred
    else:
        floor = lognormal_floor * np.max(obs, axis=1, keepdims=True)
        mask = obs > 0
        r = (np.log(obs[mask]) - np.log(np.maximum(pred, floor)[mask]))
    return float(np.sqrt(np.mean(r * r))) if r.size else 1.0


# -- driver ------------------------------------------------------------------------------

def default_grid(times, K: int = DEFAULT_K) -> GridConfig:
    return GridConfig.uniform(float(times[0]), float(times[-1]), K)


def fit(dataset: Dataset, model: ModelSpec, noise_kind: str | None = None, config: FitConfig | None = None) -> FitResult:
    """Estimate ODE parameters and noise scale from ``dataset``.

    Raises :class:`FitError` with the partial :class:`FitResult` attached if
    any round fails.
    """
    config = config or FitConfig()
    noise_kind = noise_kind or config.noise
    if noise_kind not in (GAUSSIAN, LOGNORMAL):
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    if dataset.n_species != model.dimension:
        raise InvalidModelError(
            f"model {model.name!r} has {model.dimension} species but the dataset has {dataset.n_species}"
        )
    grid = config.grid or default_grid(dataset.times, config.K)
    if grid.K < dataset.n_obs:
        raise InvalidGridError(f"enforcement grid has K={grid.K} < J={dataset.n_obs} points")
    basis = make_basis(dataset.times)
    ws = _Workspace(basis, dataset.times, grid)
    opts = config.optimizer
    box = _ode_box(model, config.bounds)
    counters = {"lognormal_clamped": 0, "lognormal_zero_obs": 0, "weight_capped": 0, "optimizer_evals": 0}
    records: list[IterationRecord] = []
    sigma_box = Box([config.sigma_bounds[0]], [config.sigma_bounds[1]])
    if noise_kind == LOGNORMAL:
        counters["lognormal_zero_obs"] = int(np.count_nonzero(dataset.values == 0))

    def xi_on_grid(C, theta):
        return _xi_from_values(model, theta, grid.grid, C @ ws.A_grid.T, C @ ws.Ap_grid.T)

    def result(C):
        splines = _as_splines(basis, C)
        t0 = float(dataset.times[0])
        ic = np.array([float(s(t0)) for s in splines])
        return FitResult(
            model=model.name,
            noise=noise_kind,
            param_names=model.param_names,
            species_names=dataset.species_names,
            splines=splines,
            grid=grid,
            records=tuple(records),
            initial_condition_estimates=ic,
            counters=dict(counters),
            config=config,
        )

    def weights(l_d, l_m, first=False):
        if not np.isfinite(l_m) or not (first or np.isfinite(l_d)):
            raise DivergenceError(f"non-finite loss while setting weights (l_d={l_d!r}, l_m={l_m!r})")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            w = update_weights(l_d, l_m, first=first)
        counters["weight_capped"] += len(caught)
        for c in caught:
            log.warning(str(c.message))
        return w

    C = np.stack([interpolate(dataset.times, y, basis).coefficients for y in dataset.values])
    try:
        theta0 = model.guess(dataset.times, dataset.values) if config.theta0 is None else config.theta0
        theta, evals = _optimize_model_only(_as_splines(basis, C), model, grid, box, opts, theta0, config.restarts)
        counters["optimizer_evals"] += evals
        xi = xi_on_grid(C, theta)
        l_m = -float(np.sum(xi * xi)) / grid.K
        w = weights(None, l_m, first=True)
        records.append(IterationRecord(theta, None, None, l_m, None, w, (None, l_m), C, xi, evals))
        log.info("round 0: theta=%s l_m=%.6g", theta, l_m)

        sigma = None
        for n in range(1, config.iterations + 1):
            M, rhs = _stacked(ws, C, dataset.values, model, theta, w)
            C = least_squares_solve(M, rhs).T
            if not np.all(np.isfinite(C)):
                raise DivergenceError(f"round {n}: spline update produced non-finite coefficients")
            splines = _as_splines(basis, C)
            if sigma is None:
                sigma = float(sigma_box.project([initial_sigma(splines, dataset, noise_kind, config.lognormal_floor)])[0])
            pred = C @ ws.A.T
            l_d_w, _ = _data_loss_checked(pred, dataset.values, NoiseModel(noise_kind, sigma), config.lognormal_floor)
            xi = xi_on_grid(C, theta)
            l_m_w = -float(np.sum(xi * xi)) / grid.K
            w = weights(l_d_w, l_m_w)

            x, evals = _optimize_penalized(
                splines, dataset, model, noise_kind, w, grid, box, opts,
                np.append(theta, sigma), config.sigma_bounds, config.lognormal_floor, config.restarts,
            )
            counters["optimizer_evals"] += evals
            theta, sigma = x[:-1], float(x[-1])
            l_d, terms = _data_loss_checked(pred, dataset.values, NoiseModel(noise_kind, sigma), config.lognormal_floor)
            counters["lognormal_clamped"] += terms.clamped
            xi = xi_on_grid(C, theta)
            l_m = -float(np.sum(xi * xi)) / grid.K
            records.append(IterationRecord(
                theta, sigma, l_d, l_m, penalized_loss(l_d, l_m, w), w, (l_d_w, l_m_w), C, xi, evals,
            ))
            log.info("round %d: theta=%s sigma=%.6g l_d=%.6g l_m=%.6g", n, theta, sigma, l_d, l_m)
    except ProfilingError as exc:
        raise FitError(f"fit aborted after {len(records)} rounds: {exc}", result(C)) from exc
    return result(C)
