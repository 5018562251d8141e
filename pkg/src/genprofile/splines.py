"""Cubic B-spline bases on clamped knot vectors.

Basis functions are indexed from 0 (the first basis function is ``j = 0``).
Two evaluation paths exist: the literal Cox-de Boor recursion
(:func:`eval_basis`, :func:`eval_basis_deriv`), which is the reference, and a
span-local evaluator that computes only the ``p + 1`` active functions and is
used to assemble collocation matrices.

The half-open support intervals leave the last knot uncovered, so the final
non-empty span is treated as closed: every function is continuous from the
left at the right end of the knot span.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSystemError, DomainError, InsufficientDataError, InvalidGridError

SUPPORTED_DEGREE = 3


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    degree: int = SUPPORTED_DEGREE

    def __post_init__(self):
        knots = _frozen(self.knots)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0:
            raise InvalidGridError("degree must be non-negative")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise InvalidGridError(f"need at least {2 * (p + 1)} knots for degree {p}")
        if not np.all(np.isfinite(knots)):
            raise InvalidGridError("knots must be finite")
        if np.any(np.diff(knots) < 0):
            raise InvalidGridError("knots must be non-decreasing")
        lo, hi = knots[0], knots[-1]
        if not lo < hi:
            raise InvalidGridError("knot span is empty")
        if np.count_nonzero(knots == lo) != p + 1 or np.count_nonzero(knots == hi) != p + 1:
            raise InvalidGridError(f"boundary knots must have multiplicity exactly {p + 1}")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    def __len__(self):
        return self.knots.size


@dataclass(frozen=True)
class SplineBasis:
    knot_vector: KnotVector
    count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "count", self.knot_vector.n_basis)

    @property
    def knots(self) -> np.ndarray:
        return self.knot_vector.knots

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def span(self) -> tuple[float, float]:
        return self.knot_vector.span


@dataclass(frozen=True)
class Spline:
    """``f(t) = sum_j c_j B_j(t)`` for a fixed basis."""

    basis: SplineBasis
    coefficients: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coefficients)
        if c.shape != (self.basis.count,):
            raise ValueError(f"expected {self.basis.count} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, t):
        return eval_spline(self, t)

    def derivative(self, t):
        return eval_spline_deriv(self, t)


@dataclass(frozen=True)
class CollocationMatrices:
    """``A[i, j] = B_j(t_i)`` and ``A_prime[i, j] = B_j'(t_i)``."""

    A: np.ndarray
    A_prime: np.ndarray
    eval_times: np.ndarray


def build_knots(data_times, degree: int = SUPPORTED_DEGREE) -> KnotVector:
    """Clamped knot vector for interpolation at ``data_times``.

    The boundary times are repeated ``degree + 1`` times and every interior
    data time becomes a knot except the second and second-to-last ones
    (the usual not-a-knot choice for cubics), so the knot count is
    ``len(data_times) + degree + 1``.

    Examples
    --------
    >>> build_knots(np.arange(0, 101, 10)).knots.tolist()[:6]
    [0.0, 0.0, 0.0, 0.0, 20.0, 30.0]
    """
    if degree != SUPPORTED_DEGREE:
        raise ValueError(f"only cubic splines (degree 3) are supported, got degree {degree}")
    t = np.asarray(data_times, dtype=float)
    if t.ndim != 1:
        raise InvalidGridError("data times must be one-dimensional")
    if t.size < degree + 1:
        raise InsufficientDataError(
            f"need at least {degree + 1} data points for degree {degree}, got {t.size}"
        )
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise InvalidGridError("data times must be finite and strictly increasing")
    interior = t[2:-2]
    knots = np.concatenate([np.repeat(t[0], degree + 1), interior, np.repeat(t[-1], degree + 1)])
    return KnotVector(knots, degree)


def make_basis(data_times, degree: int = SUPPORTED_DEGREE) -> SplineBasis:
    return SplineBasis(build_knots(data_times, degree))


def _check_domain(basis: SplineBasis, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    lo, hi = basis.span
    if not np.all((t >= lo) & (t <= hi)):
        bad = t[~((t >= lo) & (t <= hi))]
        raise DomainError(f"evaluation point {bad.flat[0]!r} outside knot span [{lo}, {hi}]")
    return t


def _check_index(basis: SplineBasis, j: int) -> None:
    if not 0 <= j < basis.count:
        raise IndexError(f"basis index {j} out of range [0, {basis.count})")


# -- literal Cox-de Boor recursion (reference path) -------------------------

def _indicator(knots: np.ndarray, j: int, t: float) -> float:
    a, b = knots[j], knots[j + 1]
    if a <= t < b:
        return 1.0
    # closed final span
    if t == knots[-1] and a < b == knots[-1]:
        return 1.0
    return 0.0


def _cox_de_boor(knots: np.ndarray, j: int, p: int, t: float) -> float:
    if p == 0:
        return _indicator(knots, j, t)
    out = 0.0
    den = knots[j + p] - knots[j]
    if den != 0.0:
        out += (t - knots[j]) / den * _cox_de_boor(knots, j, p - 1, t)
    den = knots[j + p + 1] - knots[j + 1]
    if den != 0.0:
        out += (knots[j + p + 1] - t) / den * _cox_de_boor(knots, j + 1, p - 1, t)
    return out


def _cox_de_boor_deriv(knots: np.ndarray, j: int, p: int, t: float) -> float:
    if p == 0:
        return 0.0
    out = 0.0
    den = knots[j + p] - knots[j]
    if den != 0.0:
        out += p / den * _cox_de_boor(knots, j, p - 1, t)
    den = knots[j + p + 1] - knots[j + 1]
    if den != 0.0:
        out -= p / den * _cox_de_boor(knots, j + 1, p - 1, t)
    return out


def eval_basis(basis: SplineBasis, j: int, t: float) -> float:
    """Value of the ``j``-th basis function at ``t`` by direct recursion."""
    _check_index(basis, j)
    t = float(_check_domain(basis, t))
    return _cox_de_boor(basis.knots, j, basis.degree, t)


def eval_basis_deriv(basis: SplineBasis, j: int, t: float) -> float:
    """First derivative of the ``j``-th basis function at ``t``."""
    _check_index(basis, j)
    t = float(_check_domain(basis, t))
    return _cox_de_boor_deriv(basis.knots, j, basis.degree, t)


# -- span-local evaluation (assembly path) ----------------------------------

def find_spans(basis: SplineBasis, t: np.ndarray) -> np.ndarray:
    """Index ``i`` with ``knots[i] <= t < knots[i + 1]`` (last span closed)."""
    p = basis.degree
    i = np.searchsorted(basis.knots, t, side="right") - 1
    return np.clip(i, p, basis.count - 1)


def _active_values(knots: np.ndarray, p: int, spans: np.ndarray, t: np.ndarray):
    """Nonzero basis values of degree ``p`` and ``p - 1`` at each ``t``.

    Returns ``(N, N_lower)``; ``N[:, r]`` is ``B_{i-p+r, p}`` and
    ``N_lower[:, r]`` is ``B_{i-p+1+r, p-1}`` for span ``i``.
    """
    n = t.size
    N = np.zeros((n, p + 1))
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    N_lower = N[:, :1].copy()
    for j in range(1, p + 1):
        left[:, j] = t - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - t
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
        if j == p - 1:
            N_lower = N[:, :p].copy()
    return N, N_lower


def _active_derivs(knots: np.ndarray, p: int, spans: np.ndarray, N_lower: np.ndarray):
    n = spans.size
    D = np.zeros((n, p + 1))
    if p == 0:
        return D
    for r in range(p + 1):
        j = spans - p + r
        if r >= 1:
            den = knots[j + p] - knots[j]
            D[:, r] += np.where(den > 0, p * N_lower[:, r - 1] / np.where(den > 0, den, 1.0), 0.0)
        if r <= p - 1:
            den = knots[j + p + 1] - knots[j + 1]
            D[:, r] -= np.where(den > 0, p * N_lower[:, r] / np.where(den > 0, den, 1.0), 0.0)
    return D


def collocation(basis: SplineBasis, eval_times) -> CollocationMatrices:
    """Dense collocation matrices of basis values and first derivatives.

    Row ``i`` holds at most ``degree + 1`` nonzero entries, in columns
    ``span_i - degree .. span_i``.
    """
    t = np.atleast_1d(_check_domain(basis, eval_times)).astype(float)
    p = basis.degree
    spans = find_spans(basis, t)
    N, N_lower = _active_values(basis.knots, p, spans, t)
    D = _active_derivs(basis.knots, p, spans, N_lower)
    A = np.zeros((t.size, basis.count))
    Ap = np.zeros((t.size, basis.count))
    rows = np.arange(t.size)[:, None]
    cols = spans[:, None] - p + np.arange(p + 1)[None, :]
    A[rows, cols] = N
    Ap[rows, cols] = D
    for m in (A, Ap, t):
        m.setflags(write=False)
    return CollocationMatrices(A=A, A_prime=Ap, eval_times=t)


def eval_spline(s: Spline, t):
    """``sum_j c_j B_j(t)``; scalar in, scalar out."""
    scalar = np.ndim(t) == 0
    m = collocation(s.basis, t)
    out = m.A @ s.coefficients
    return float(out[0]) if scalar else out


def eval_spline_deriv(s: Spline, t):
    scalar = np.ndim(t) == 0
    m = collocation(s.basis, t)
    out = m.A_prime @ s.coefficients
    return float(out[0]) if scalar else out


def interpolate(data_times, values, basis: SplineBasis | None = None) -> Spline:
    """Spline through every ``(data_times[j], values[j])``.

    Solves the square collocation system ``A c = values``. If ``basis`` is
    omitted it is built from ``data_times``.
    """
    t = np.asarray(data_times, dtype=float)
    y = np.asarray(values, dtype=float)
    if basis is None:
        basis = make_basis(t)
    if t.shape != y.shape or t.size != basis.count:
        raise ValueError(
            f"need {basis.count} times and values, got {t.size} times and {y.size} values"
        )
    A = collocation(basis, t).A
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateSystemError(f"interpolation matrix is singular (condition {cond:.3g})")
    c = np.linalg.solve(A, y)
    return Spline(basis, c)
