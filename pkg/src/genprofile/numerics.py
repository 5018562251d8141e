"""Bound-constrained Nelder-Mead maximization and QR least squares."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import DivergenceError, InvalidStartError, RankDeficiencyError

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds must have the same shape")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_pairs(cls, pairs) -> "Box":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def project(self, x) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


@dataclass(frozen=True)
class OptimizerOptions:
    max_evals: int = 10_000
    x_tol: float = 1e-8
    f_tol: float = 1e-10
    initial_simplex_scale: float = 0.1

    def __post_init__(self):
        if not (self.x_tol > 0 and self.f_tol > 0 and self.initial_simplex_scale > 0):
            raise ValueError("tolerances and simplex scale must be positive")


class OptimizeResult(NamedTuple):
    x: np.ndarray
    f: float
    evals: int


def _initial_simplex(x0, box: Box, scale: float) -> np.ndarray:
    n = x0.size
    sim = np.tile(x0, (n + 1, 1))
    step = scale * box.width
    for i in range(n):
        xi = x0[i] + step[i]
        if xi > box.upper[i]:
            xi = x0[i] - step[i]
        sim[i + 1, i] = xi
    return box.project(sim)


def nelder_mead_max(
    objective: Callable[[np.ndarray], float],
    x0,
    box: Box,
    opts: OptimizerOptions | None = None,
    trace: Callable | None = None,
) -> OptimizeResult:
    """Maximize ``objective`` over ``box`` with the Nelder-Mead simplex method.

    Every trial point is projected componentwise onto the box before it is
    evaluated. Non-finite objective values during the search count as
    ``-inf``. Vertices are ordered by decreasing value with ties broken in
    favour of the lower index, so the run is fully deterministic.

    Stops once the simplex fits within ``x_tol`` of the best vertex in every
    coordinate and the vertex values agree within ``f_tol``, or when
    ``max_evals`` is reached.

    Parameters
    ----------
    objective : callable
        Maps a 1-d parameter array to a float.
    x0 : array_like
        Starting point; must lie inside ``box``.
    box : Box
        Simple bound constraints.
    opts : OptimizerOptions, optional
    trace : callable, optional
        Called as ``trace(best_x, best_f)`` after every iteration.

    Returns
    -------
    OptimizeResult
        ``(x, f, evals)`` for the best vertex found.
    """
    opts = opts or OptimizerOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != box.lower.shape:
        raise ValueError(f"x0 has shape {x0.shape}, box has {box.lower.shape}")
    if not box.contains(x0):
        raise InvalidStartError("starting point lies outside the box")
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise InvalidStartError(f"objective is not finite at the starting point: {f0!r}")
    n = x0.size
    if opts.max_evals < n + 2:
        raise ValueError(f"max_evals must be at least {n + 2}")

    evals = 1

    def f(x):
        nonlocal evals
        evals += 1
        v = float(objective(x))
        return v if np.isfinite(v) else -np.inf

    sim = _initial_simplex(x0, box, opts.initial_simplex_scale)
    fsim = np.empty(n + 1)
    fsim[0] = f0
    for i in range(1, n + 1):
        fsim[i] = f(sim[i])

    def order():
        idx = np.argsort(-fsim, kind="stable")
        return sim[idx], fsim[idx]

    sim, fsim = order()
    while evals < opts.max_evals:
        if (
            np.max(np.abs(sim[1:] - sim[0])) <= opts.x_tol
            and np.max(np.abs(fsim[1:] - fsim[0])) <= opts.f_tol
        ):
            break
        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = box.project(centroid + REFLECT * (centroid - worst))
        fr = f(xr)
        if fr > fsim[0]:
            xe = box.project(centroid + EXPAND * (centroid - worst))
            fe = f(xe)
            if fe > fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr > fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            if fr > fsim[-1]:
                xc = box.project(centroid + CONTRACT * (xr - centroid))
                fc = f(xc)
                accept = fc >= fr
            else:
                xc = box.project(centroid + CONTRACT * (worst - centroid))
                fc = f(xc)
                accept = fc > fsim[-1]
            if accept:
                sim[-1], fsim[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    sim[i] = box.project(sim[0] + SHRINK * (sim[i] - sim[0]))
                    fsim[i] = f(sim[i])
        sim, fsim = order()
        if trace is not None:
            trace(sim[0].copy(), fsim[0])
    return OptimizeResult(sim[0].copy(), float(fsim[0]), evals)


def least_squares_solve(M, rhs, rcond: float | None = None) -> np.ndarray:
    """Minimize ``||M c - rhs||_2`` through a column-pivoted QR factorization.

    ``rhs`` may be a vector or a matrix of right-hand sides sharing ``M``.
    Raises :class:`RankDeficiencyError` when the numerical rank of ``M`` is
    below its column count and :class:`DivergenceError` on non-finite input.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(rhs, dtype=float)
    m, n = M.shape
    if m < n:
        raise ValueError(f"system is under-determined ({m} rows, {n} columns)")
    if b.shape[0] != m:
        raise ValueError(f"rhs has {b.shape[0]} rows, matrix has {m}")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
        raise DivergenceError("least-squares system contains non-finite entries")
    Q, R, perm = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = (rcond if rcond is not None else max(m, n) * np.finfo(float).eps) * (diag[0] if n else 0.0)
    rank = int(np.count_nonzero(diag > tol))
    if rank < n:
        raise RankDeficiencyError(rank, n)
    z = scipy.linalg.solve_triangular(R, Q.T @ b)
    out = np.empty_like(z)
    out[perm] = z
    return out
