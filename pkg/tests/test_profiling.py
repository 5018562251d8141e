import warnings

import numpy as np
import pytest
from scipy import stats

from genprofile.errors import (
    DataLossError,
    DomainError,
    FitError,
    InvalidGridError,
    InvalidModelError,
    RankDeficiencyError,
)
from genprofile.models import CHAIN2, LOGISTIC, NEWTON, FullParameterVector, ModelSpec, exact_chain2, exact_newton
from genprofile.noise import NoiseModel
from genprofile.numerics import OptimizerOptions
from genprofile.profiling import (
    WEIGHT_CAP,
    Dataset,
    FitConfig,
    GridConfig,
    WeightState,
    data_loss,
    discrepancy,
    fit,
    model_loss,
    optimize_theta_model_only,
    optimize_theta_penalized,
    penalized_loss,
    spline_update,
    stacked_system,
    update_weights,
)
from genprofile.splines import Spline, interpolate, make_basis
from genprofile.synthetic import simulate_dataset

T11 = np.arange(0.0, 101.0, 10.0)
GRID = GridConfig.uniform(0, 100, 1001)


def const_splines(values, times=T11):
    basis = make_basis(times)
    return tuple(Spline(basis, np.full(basis.count, v)) for v in values)


def constant_model(c):
    # dy/dt = -c, so a constant spline has xi = c everywhere
    return ModelSpec("const", len(c), ("k",), ((0.0, 1.0),),
                     lambda t, y, p: -np.asarray(c, float).reshape(-1, *([1] * (y.ndim - 1))) * np.ones_like(y))


# -- types ----------------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(InvalidGridError):
        Dataset([0, 1, 2], [1, 2, 3])
    with pytest.raises(InvalidGridError):
        Dataset([0, 2, 1, 3], [1, 2, 3, 4])
    with pytest.raises(InvalidGridError):
        Dataset([0, 1, 2, 3], [1, 2, np.nan, 4])
    with pytest.raises(InvalidGridError):
        Dataset([0, 1, 2, 3], [[1, 2, 3, 4]], ("a", "b"))
    ds = Dataset(T11, np.zeros(11))
    assert ds.values.shape == (1, 11) and ds.species_names == ("y1",)


def test_weight_state_validation():
    for bad in [(0.0, 1.0), (1.0, -1.0), (np.inf, 1.0)]:
        with pytest.raises(ValueError):
            WeightState(*bad)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(iterations=0)


# -- discrepancy and losses ---------------------------------------------------------------

def test_discrepancy_equilibria():
    xi = discrepancy(const_splines([20.0]), NEWTON, [0.37, 20.0], GRID.grid)
    assert np.max(np.abs(xi)) == pytest.approx(0.0, abs=1e-12)
    xi = discrepancy(const_splines([100.0]), LOGISTIC, [0.1, 100.0], GRID.grid)
    assert np.max(np.abs(xi)) == pytest.approx(0.0, abs=1e-12)
    assert discrepancy(const_splines([20.0]), NEWTON, [0.37, 20.0], 50.0).shape == (1,)


def test_discrepancy_dense_interpolant():
    t = np.linspace(0, 100, 101)
    y = exact_newton(t, FullParameterVector([0.05, 20], [180]))
    s = (interpolate(t, y),)
    xi = discrepancy(s, NEWTON, [0.05, 20], np.linspace(0, 100, 2001))
    assert np.max(np.abs(xi)) <= 0.05


def test_discrepancy_domain():
    with pytest.raises(DomainError):
        discrepancy(const_splines([1.0]), NEWTON, [0.1, 0.0], 150.0)


def test_model_loss_examples():
    assert model_loss(const_splines([20.0]), NEWTON, [0.05, 20.0], GRID) == pytest.approx(0.0, abs=1e-25)
    assert model_loss(const_splines([1.0]), constant_model([0.3]), [0.0], GRID) == pytest.approx(-0.09, abs=1e-14)
    l_m = model_loss(const_splines([1.0, 2.0]), constant_model([0.3, -0.4]), [0.0], GRID)
    assert l_m == pytest.approx(-(0.09 + 0.16), abs=1e-14)  # normalized by K, not S*K


def test_data_loss_examples():
    y = 20 + 160 * np.exp(-T11 / 20)
    s = (interpolate(T11, y),)
    ds = Dataset(T11, y)
    l1 = data_loss(s, ds, NoiseModel("gaussian", 1.0))
    assert l1 == pytest.approx(-11 * 0.5 * np.log(2 * np.pi), abs=1e-9)
    assert l1 == pytest.approx(-10.1084, abs=1e-4)
    l2 = data_loss(s, ds, NoiseModel("gaussian", 2.0))
    assert l1 - l2 == pytest.approx(11 * np.log(2), abs=1e-9)


def test_data_loss_matches_direct_sum():
    rng = np.random.default_rng(4)
    y = rng.normal(50, 10, size=(2, 11))
    s = const_splines([48.0, 52.0])
    ds = Dataset(T11, y)
    ref = sum(stats.norm.logpdf(y[k, j], [48.0, 52.0][k], 3.3) for k in range(2) for j in range(11))
    assert data_loss(s, ds, NoiseModel("gaussian", 3.3)) == pytest.approx(ref, abs=1e-12 * abs(ref))
    ref = sum(stats.lognorm.logpdf(y[k, j], 0.2, scale=[48.0, 52.0][k]) for k in range(2) for j in range(11))
    assert data_loss(s, ds, NoiseModel("lognormal", 0.2)) == pytest.approx(ref, rel=1e-12)


def test_data_loss_lognormal_guards():
    y = np.linspace(1, 2, 11)
    noise = NoiseModel("lognormal", 0.1)
    # zero observations are left out entirely
    y0 = y.copy()
    y0[3] = 0.0
    s = const_splines([1.5])
    with_zero = data_loss(s, Dataset(T11, y0), noise)
    ref = sum(stats.lognorm.logpdf(v, 0.1, scale=1.5) for k, v in enumerate(y) if k != 3)
    assert with_zero == pytest.approx(ref, rel=1e-12)
    with pytest.raises(DomainError):
        data_loss(s, Dataset(T11, -y), noise)
    # a non-positive prediction is clamped to the floor, giving a finite loss
    assert np.isfinite(data_loss(const_splines([-1.0]), Dataset(T11, y), noise))


def test_data_loss_non_finite_diagnostic():
    s = const_splines([1.0])
    ds = Dataset(T11, np.full(11, 1e300))
    with pytest.raises(DataLossError) as err:
        with np.errstate(over="ignore"):
            data_loss(s, ds, NoiseModel("gaussian", 1e-300))
    assert err.value.species == 0 and err.value.index == 0


def test_penalized_loss_examples():
    assert penalized_loss(-25.0, -0.04, WeightState(0.04, 25.0)) == pytest.approx(-2.0)
    assert penalized_loss(-7.5, -3.0, WeightState(1.0, 1e-30)) == pytest.approx(-7.5)


def test_update_weights_examples():
    w = update_weights(-25.0, -0.04)
    assert (w.w_d, w.w_m) == pytest.approx((0.04, 25.0))
    w = update_weights(-1.0, -1.0)
    assert (w.w_d, w.w_m) == (1.0, 1.0)
    w = update_weights(None, -0.04, first=True)
    assert (w.w_d, w.w_m) == pytest.approx((1.0, 25.0))
    for l_d, l_m in [(-3.7, -0.0012), (-1e4, -1e-6)]:
        w = update_weights(l_d, l_m)
        assert penalized_loss(l_d, l_m, w) == pytest.approx(-2.0, abs=1e-12)


def test_update_weights_cap():
    with pytest.warns(RuntimeWarning):
        w = update_weights(-2.0, 0.0)
    assert w.w_m == WEIGHT_CAP
    with pytest.warns(RuntimeWarning):
        w = update_weights(-2.0, -1e-320)  # reciprocal overflows
    assert w.w_m == WEIGHT_CAP


# -- spline update ------------------------------------------------------------------------

@pytest.fixture
def newton_data():
    return simulate_dataset(NEWTON, [0.05, 20], [180], 8.0, T11, seed=1)


def test_stacked_shape(newton_data):
    s = tuple(interpolate(T11, y) for y in newton_data.values)
    M, rhs = stacked_system(s, newton_data, NEWTON, [0.05, 20], WeightState(1, 1), GRID)
    assert M.shape == (1012, 11)
    assert rhs.shape == (1012, 1)


def test_stacked_two_species():
    ds = simulate_dataset(CHAIN2, [0.06, 0.04], [100, 0], 0.1, T11, "lognormal", seed=2)
    s = tuple(interpolate(T11, y) for y in ds.values)
    M, rhs = stacked_system(s, ds, CHAIN2, [0.06, 0.04], WeightState(0.5, 3.0), GRID)
    assert M.shape == (1012, 11) and rhs.shape == (1012, 2)
    np.testing.assert_allclose(rhs[:11].T, 0.5 * ds.values)


def test_spline_update_tiny_model_weight(newton_data):
    s = tuple(interpolate(T11, y) for y in newton_data.values)
    new = spline_update(s, newton_data, NEWTON, [0.05, 20], WeightState(1.0, 1e-30), GRID)
    np.testing.assert_allclose(new[0].coefficients, s[0].coefficients, atol=1e-6)


def test_spline_update_on_exact_solution():
    y = exact_newton(T11, FullParameterVector([0.05, 20], [180]))
    ds = Dataset(T11, y)
    s = (interpolate(T11, y),)
    theta = [0.05, 20]
    xi0 = discrepancy(s, NEWTON, theta, GRID.grid)
    l_d = data_loss(s, ds, NoiseModel("gaussian", 1.0))
    w = update_weights(l_d, model_loss(s, NEWTON, theta, GRID))
    new = spline_update(s, ds, NEWTON, theta, w, GRID)
    xi1 = discrepancy(new, NEWTON, theta, GRID.grid)
    assert np.linalg.norm(xi1) <= np.linalg.norm(xi0)
    assert np.max(np.abs(new[0].coefficients - s[0].coefficients)) < np.max(np.abs(xi0)) * 100


# -- parameter updates ----------------------------------------------------------------------

def test_model_only_recovery_newton():
    t = np.linspace(0, 100, 51)
    y = exact_newton(t, FullParameterVector([0.05, 20], [180]))
    theta = optimize_theta_model_only((interpolate(t, y),), NEWTON, GridConfig.uniform(0, 100, 1001),
                                      theta0=NEWTON.guess(t, y[None]))
    assert theta[0] == pytest.approx(0.05, rel=0.05)
    assert theta[1] == pytest.approx(20, rel=0.05)


def test_model_only_recovery_logistic():
    t = np.linspace(0, 100, 51)
    y = LOGISTIC.exact_solution(t, [0.1, 100], [5])[0]
    theta = optimize_theta_model_only((interpolate(t, y),), LOGISTIC, GridConfig.uniform(0, 100, 1001),
                                      theta0=LOGISTIC.guess(t, y[None]))
    assert theta[0] == pytest.approx(0.1, rel=0.05)
    assert theta[1] == pytest.approx(100, rel=0.02)


def test_penalized_sigma_closed_form(newton_data):
    s = tuple(interpolate(T11, y) for y in newton_data.values)
    s = spline_update(s, newton_data, NEWTON, [0.05, 20], WeightState(1.0, 30.0), GRID)
    pred = s[0](T11)
    sigma_hat = np.sqrt(np.mean((newton_data.values[0] - pred) ** 2))
    w = WeightState(0.02, 10.0)
    x = optimize_theta_penalized(s, newton_data, NEWTON, "gaussian", w, GRID, theta0=[0.05, 20, 3.0])
    assert x[-1] == pytest.approx(sigma_hat, rel=0.01)


def test_penalized_tiny_model_weight(newton_data):
    s = tuple(interpolate(T11, y) for y in newton_data.values)
    s = spline_update(s, newton_data, NEWTON, [0.05, 20], WeightState(1.0, 30.0), GRID)
    w = WeightState(1.0, 1e-12)
    x = optimize_theta_penalized(s, newton_data, NEWTON, "gaussian", w, GRID, theta0=[0.05, 20, 3.0])
    # pure data-loss maximizer over sigma, found by a dense 1-d scan
    sig = np.linspace(0.01, 20, 20001)
    ld = [data_loss(s, newton_data, NoiseModel("gaussian", v)) for v in sig[::50]]
    best = sig[::50][int(np.argmax(ld))]
    assert x[-1] == pytest.approx(best, abs=0.06)


def test_penalized_monotone(newton_data):
    s = tuple(interpolate(T11, y) for y in newton_data.values)
    w = WeightState(0.03, 5.0)
    x0 = np.array([0.04, 25.0, 6.0])

    def ell(x):
        l_d = data_loss(s, newton_data, NoiseModel("gaussian", x[-1]))
        return penalized_loss(l_d, model_loss(s, NEWTON, x[:-1], GRID), w)

    x = optimize_theta_penalized(s, newton_data, NEWTON, "gaussian", w, GRID, theta0=x0)
    assert ell(x) >= ell(x0)


# -- driver -----------------------------------------------------------------------------------

def test_fit_history_shapes(newton_data):
    r = fit(newton_data, NEWTON, "gaussian", FitConfig(iterations=4))
    assert r.complete and len(r.records) == 5
    assert len(r.theta_history) == len(r.loss_history) == len(r.weight_history) == 5
    assert r.xi_samples.shape == (5, 1, 1001)
    assert r.records[0].sigma is None and r.records[0].l_d is None
    assert r.records[0].weights.w_d == 1.0
    assert r.initial_condition_estimates.shape == (1,)
    assert r.initial_condition_estimates[0] == pytest.approx(r.splines[0](0.0))
    assert all(rec.l_m <= 0 for rec in r.records)


def test_fit_weight_rule_each_round(newton_data):
    r = fit(newton_data, NEWTON, "gaussian", FitConfig(iterations=5))
    for n, rec in enumerate(r.records):
        l_d, l_m = rec.weight_losses
        assert rec.weights.w_m * abs(l_m) == pytest.approx(1.0, abs=1e-12)
        if n == 0:
            assert rec.weights.w_d == 1.0
        else:
            assert rec.weights.w_d * abs(l_d) == pytest.approx(1.0, abs=1e-12)
            assert penalized_loss(l_d, l_m, rec.weights) == pytest.approx(-2.0, abs=1e-12)


@pytest.mark.parametrize("model,level,theta0", [(NEWTON, 20.0, [0.05, 20.0]), (LOGISTIC, 100.0, [0.1, 100.0])])
def test_fit_equilibrium_fixed_point(model, level, theta0):
    ds = Dataset(T11, np.full(11, level))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            r = fit(ds, model, "gaussian", FitConfig(iterations=3, theta0=theta0))
        except FitError as exc:
            # with l_m ~ 0 the model weight hits the cap and the stacked system
            # eventually loses numerical rank; every recorded round must still
            # be an exact equilibrium
            assert isinstance(exc.__cause__, RankDeficiencyError)
            r = exc.partial
    assert len(r.records) >= 2
    np.testing.assert_allclose(r.records[0].coefficients, level, atol=1e-9)
    for rec in r.records:
        assert np.ptp(rec.coefficients) <= 1e-9 * level
        assert np.max(np.abs(rec.xi)) <= 1e-9
        assert rec.weights.w_m >= 1e10


def test_fit_species_symmetry():
    ds = simulate_dataset(CHAIN2, [0.06, 0.04], [100, 0], 0.1, T11, "lognormal", seed=5)
    swapped_model = ModelSpec(
        "chain2_swapped", 2, ("r1", "r2"), CHAIN2.param_bounds,
        lambda t, y, p: CHAIN2.rhs(t, y[::-1], p)[::-1],
        species_names=("C2", "C1"), initial_guess=CHAIN2.initial_guess,
    )
    swapped = Dataset(ds.times, ds.values[::-1], ds.species_names[::-1])
    cfg = FitConfig(iterations=3)
    a = fit(ds, CHAIN2, "lognormal", cfg)
    b = fit(swapped, swapped_model, "lognormal", cfg)
    np.testing.assert_allclose(b.theta, a.theta, rtol=1e-7)
    np.testing.assert_allclose(b.initial_condition_estimates[::-1], a.initial_condition_estimates, rtol=1e-7)
    np.testing.assert_allclose(b.xi_samples[:, ::-1], a.xi_samples, atol=1e-7)


def test_fit_grid_refinement_stable():
    ds = simulate_dataset(NEWTON, [0.05, 20], [180], 1e-12, T11, seed=0)
    a = fit(ds, NEWTON, "gaussian", FitConfig(K=1001))
    b = fit(ds, NEWTON, "gaussian", FitConfig(K=2001))
    np.testing.assert_allclose(b.theta, a.theta, rtol=0.01)


def test_fit_deterministic(newton_data):
    a = fit(newton_data, NEWTON, "gaussian", FitConfig(iterations=3))
    b = fit(newton_data, NEWTON, "gaussian", FitConfig(iterations=3))
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.theta, rb.theta) and np.array_equal(ra.coefficients, rb.coefficients)


def test_fit_dimension_mismatch(newton_data):
    with pytest.raises(InvalidModelError):
        fit(newton_data, CHAIN2, "gaussian")


def test_fit_small_grid_rejected(newton_data):
    with pytest.raises(InvalidGridError):
        fit(newton_data, NEWTON, "gaussian", FitConfig(K=5))


def test_fit_abort_keeps_partial(newton_data):
    # an rhs that turns non-finite after round 0 makes the stacked system fail
    calls = {"n": 0}

    def rhs(t, y, p):
        calls["n"] += 1
        return -p[0] * (y - p[1]) * (np.inf if calls["n"] > 1000 else 1.0)

    bad = ModelSpec("bad", 1, NEWTON.param_names, NEWTON.param_bounds, rhs, initial_guess=NEWTON.initial_guess)
    with pytest.raises(FitError) as err:
        with np.errstate(all="ignore"):
            fit(newton_data, bad, "gaussian", FitConfig(iterations=3, optimizer=OptimizerOptions(max_evals=200)))
    partial = err.value.partial
    assert partial is not None and not partial.complete
    assert len(partial.records) >= 1


def test_lognormal_clamp_counter():
    ds = simulate_dataset(CHAIN2, [0.06, 0.04], [100, 0], 0.1, T11, "lognormal", seed=0)
    r = fit(ds, CHAIN2, "lognormal", FitConfig(iterations=2))
    assert r.counters["lognormal_zero_obs"] == 1  # C2(0) = 0
    assert set(r.counters) == {"lognormal_clamped", "lognormal_zero_obs", "weight_capped", "optimizer_evals"}
    np.testing.assert_allclose(exact_chain2(0.0, FullParameterVector([0.06, 0.04], [100, 0])), [100, 0])
