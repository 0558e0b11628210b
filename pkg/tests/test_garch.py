import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gaugemarket.garch import (
    MIN_LENGTH,
    STARTS,
    INTERIOR_TOL,
    GarchFitError,
    check_params,
    constant_variance_loglik,
    fit_garch,
    garch_filter,
    gaussian_loglik,
    simulate_garch,
)

params_st = st.tuples(st.floats(1e-6, 10), st.floats(0, 0.5), st.floats(0, 0.49))


def reference_loglik(series, params, init_var):
    """Two passes: variance path first, then the Gaussian sum."""
    a0, a1, b1 = params
    eps = [x - sum(series) / len(series) for x in series]
    s2 = [init_var]
    for t in range(1, len(eps)):
        s2.append(a0 + a1 * eps[t - 1] ** 2 + b1 * s2[t - 1])
    return -0.5 * sum(math.log(2 * math.pi * s2[t]) + eps[t] ** 2 / s2[t] for t in range(1, len(eps)))


def test_filter_collapses_without_dynamics():
    s2 = garch_filter(np.random.default_rng(0).normal(size=50), (0.3, 0.0, 0.0), 2.0)
    assert s2[0] == 2.0 and np.all(s2[1:] == 0.3)


def test_filter_substitution():
    s2 = garch_filter([2.0, 0.5], (0.1, 0.2, 0.3), 1.0, demean=False)
    assert s2[1] == pytest.approx(1.2, rel=1e-15)


@given(params_st, st.integers(0, 1000))
def test_filter_variance_bounded_below(params, seed):
    if params[1] + params[2] >= 1:
        return
    s2 = garch_filter(np.random.default_rng(seed).normal(size=200), params, 1.0)
    assert np.all(s2[1:] >= params[0])


def test_filter_long_run_mean():
    params = (1e-6, 0.05, 0.90)
    x = simulate_garch(params, 100_000, np.random.default_rng(4))
    s2 = garch_filter(x, params, float(np.var(x)))
    assert s2.mean() == pytest.approx(params[0] / (1 - 0.95), rel=0.05)


def test_filter_rejects_bad_inputs():
    with pytest.raises(ValueError):
        garch_filter([1.0, 2.0], (0.1, 0.2, 0.3), 0.0)
    for bad in ((0.0, 0.1, 0.1), (1.0, -0.1, 0.5), (1.0, 0.5, 0.5)):
        with pytest.raises(ValueError):
            check_params(bad)


def test_loglik_single_window():
    ll = gaussian_loglik([0.7, 0.0], (1.0, 0.0, 0.0), 1.0, demean=False)
    assert ll == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-15)


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_loglik_scaling(c):
    x = np.random.default_rng(1).normal(size=300)
    p = (0.2, 0.1, 0.7)
    base = gaussian_loglik(x, p, 1.5)
    scaled = gaussian_loglik(c * x, (c * c * 0.2, 0.1, 0.7), c * c * 1.5)
    assert scaled - base == pytest.approx(-(x.size - 1) * math.log(c), rel=1e-10)


@given(params_st, st.integers(0, 10_000), st.floats(0.01, 10))
def test_loglik_matches_two_pass_reference(params, seed, init_var):
    if params[1] + params[2] >= 1:
        return
    x = np.random.default_rng(seed).standard_t(5, size=120)
    got = gaussian_loglik(x, params, init_var)
    want = reference_loglik(list(x), params, init_var)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_fit_rejects_degenerate_series():
    with pytest.raises(GarchFitError):
        fit_garch(np.ones(500))
    with pytest.raises(GarchFitError):
        fit_garch(np.random.default_rng(0).normal(size=MIN_LENGTH - 1))


@pytest.mark.parametrize("seed", range(5))
def test_fit_improves_on_every_start(seed):
    x = simulate_garch((0.1, 0.1, 0.8), 3000, np.random.default_rng(seed))
    fit = fit_garch(x)
    var = float(np.var(x))
    for a1, b1 in STARTS:
        assert fit.loglik >= gaussian_loglik(x, (var * (1 - a1 - b1), a1, b1), var) - 1e-9
    assert fit.converged
    assert fit.alpha0 > 0 and fit.alpha1 > 0 and fit.beta1 > 0 and fit.persistence < 1


def test_fit_is_scale_equivariant():
    x = simulate_garch((0.1, 0.1, 0.8), 3000, np.random.default_rng(11))
    a, b = fit_garch(x), fit_garch(1e-3 * x)
    assert b.alpha1 == pytest.approx(a.alpha1, rel=1e-5, abs=1e-8)
    assert b.beta1 == pytest.approx(a.beta1, rel=1e-5, abs=1e-8)
    assert b.alpha0 == pytest.approx(1e-6 * a.alpha0, rel=1e-4)


def test_fit_on_iid_gaussian_is_not_significant():
    rng = np.random.default_rng(5)
    threshold = stats.chi2.ppf(0.95, df=2)
    below = 0
    for _ in range(30):
        x = rng.normal(size=2000)
        lr = 2 * (fit_garch(x).loglik - constant_variance_loglik(x))
        assert lr > -1e-3  # the null optimum is a boundary limit
        below += lr < threshold
    assert below >= 27


def test_boundary_optimum_is_flagged():
    # i.i.d. data with a near-constant fit sits on the edge of the region
    fits = [fit_garch(np.random.default_rng(s).normal(size=2000)) for s in range(10)]
    for f in fits:
        assert np.isfinite(f.loglik)
        inside = min(f.alpha1, f.beta1, 1 - f.persistence) > INTERIOR_TOL
        assert f.converged == inside


def test_simulate_reproducible_and_constant_variance():
    p = (0.5, 0.0, 0.0)
    a = simulate_garch(p, 100_000, np.random.default_rng(3))
    b = simulate_garch(p, 100_000, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert np.var(a) == pytest.approx(0.5, rel=0.05)


def test_simulate_is_leptokurtic():
    x = simulate_garch((1e-6, 0.05, 0.90), 100_000, np.random.default_rng(8))
    assert stats.kurtosis(x) > 0


def test_simulate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        simulate_garch((1.0, 0.6, 0.5), 100, np.random.default_rng(0))
    with pytest.raises(ValueError):
        simulate_garch((1.0, 0.1, 0.5), 1, np.random.default_rng(0))


def test_fit_record_dict():
    fit = fit_garch(np.random.default_rng(2).normal(size=500))
    d = fit.to_dict()
    assert set(d) == {"alpha0", "alpha1", "beta1", "loglik", "converged"}
    assert fit.params == (fit.alpha0, fit.alpha1, fit.beta1)
