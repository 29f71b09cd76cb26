import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, strategies as st
from scipy.optimize import approx_fprime

from oddscal.errors import Diverged, NotConverged, SingularJacobian
from oddscal.logistic import Beta, fit, jacobian, loglik, mu, score, unit_scores


def counts_data(n00, n01, n10, n11):
    # one record per cell, weighted by the count; nxy indexes x then y
    x = np.array([0, 0, 1, 1.0])
    y = np.array([0, 1, 0, 1.0])
    return y, x, np.array([n00, n01, n10, n11], dtype=float)


def test_cell_count_oracle():
    y, x, w = counts_data(20, 10, 10, 20)
    res = fit(y, x, w)
    assert res.converged
    assert res.beta.b1 == pytest.approx(np.log(4), abs=1e-8)
    assert res.beta.b0 == pytest.approx(-np.log(2), abs=1e-8)


def test_general_cell_counts(rng):
    for _ in range(20):
        c = rng.uniform(1, 50, 4)
        res = fit(*counts_data(*c))
        assert res.beta.b0 == pytest.approx(np.log(c[1] / c[0]), abs=1e-9)
        assert res.beta.b1 == pytest.approx(np.log(c[0] * c[3] / (c[1] * c[2])), abs=1e-9)


def test_matches_statsmodels(rng):
    n = 300
    x = rng.normal(size=n)
    y = (rng.random(n) < mu(0.3 + 0.8 * x)).astype(float)
    w = rng.uniform(0.5, 3.0, n)
    ours = fit(y, x, w).beta.as_array()
    ref = sm.GLM(y, sm.add_constant(x), family=sm.families.Binomial(), freq_weights=w).fit(tol=1e-14)
    np.testing.assert_allclose(ours, ref.params, atol=1e-8)


def test_mu_is_stable():
    assert mu(1000.0) == 1.0 and mu(-1000.0) == 0.0
    assert mu(0.0) == 0.5


def test_unit_scores_sum_to_score(rng):
    x = rng.normal(size=20)
    y = (rng.random(20) < 0.5).astype(float)
    w = rng.uniform(1, 2, 20)
    np.testing.assert_allclose(w @ unit_scores(y, x, Beta(0.1, -0.2)), score(y, x, w, [0.1, -0.2]))


def test_score_is_loglik_gradient(rng):
    x = rng.normal(size=50)
    y = (rng.random(50) < 0.4).astype(float)
    w = rng.uniform(0.5, 2, 50)
    b = np.array([0.2, -0.5])
    num = approx_fprime(b, lambda bb: loglik(y, x, w, bb), 1e-7)
    np.testing.assert_allclose(score(y, x, w, b), num, rtol=1e-5, atol=1e-6)
    numJ = np.column_stack([(score(y, x, w, b + h) - score(y, x, w, b - h)) / 2e-6
                            for h in np.eye(2) * 1e-6])
    np.testing.assert_allclose(jacobian(x, w, b), numJ, rtol=1e-6)


def test_separation_detected():
    x = np.array([0, 0, 1, 1.0])
    y = np.array([0, 0, 1, 1.0])
    with pytest.raises(Diverged):
        fit(y, x, np.ones(4))
    with pytest.raises(Diverged):
        fit(np.ones(4), x, np.ones(4))
    # quasi-complete: an x = 0 row with y = 1 but all x = 1 rows are y = 1
    with pytest.raises(Diverged):
        fit(np.array([0, 1, 1, 1.0]), x, np.ones(4))


def test_zero_weight_units_ignored_for_separation():
    x = np.array([0, 0, 1, 1, 1.0])
    y = np.array([0, 1, 0, 1, 1.0])
    res = fit(y, x, np.array([1, 1, 1, 1, 0.0]))
    assert res.beta.b1 == pytest.approx(0.0, abs=1e-9)


def test_constant_risk_variable():
    with pytest.raises(SingularJacobian):
        fit(np.array([0, 1, 0, 1.0]), np.ones(4), np.ones(4))


def test_not_converged(rng):
    x = rng.normal(size=100)
    y = (rng.random(100) < mu(x)).astype(float)
    with pytest.raises(NotConverged):
        fit(y, x, np.ones(100), max_iter=1)


def test_input_validation():
    with pytest.raises(ValueError):
        fit(np.array([0, 2.0]), np.array([0, 1.0]), np.ones(2))
    with pytest.raises(ValueError):
        fit(np.zeros(3), np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        Beta(np.nan, 0.0)


def test_negative_weights_still_converge(rng):
    # calibration weights may be negative; the solver should still find the root
    x = rng.normal(size=200)
    y = (rng.random(200) < mu(-0.2 + x)).astype(float)
    w = rng.uniform(0.5, 2, 200)
    w[:5] = -0.3
    res = fit(y, x, w)
    assert res.converged
    assert np.max(np.abs(score(y, x, w, res.beta))) <= 1e-10 * np.abs(w).sum()


@given(seed=st.integers(0, 2**32 - 1), binary=st.booleans())
def test_fit_solves_score_equation(seed, binary):
    rng = np.random.default_rng(seed)
    n = 80
    x = (rng.random(n) < 0.5).astype(float) if binary else rng.normal(size=n)
    y = (rng.random(n) < mu(rng.normal() + rng.normal() * x)).astype(float)
    w = rng.uniform(0.2, 5, n)
    try:
        res = fit(y, x, w)
    except Diverged:
        return
    assert np.max(np.abs(score(y, x, w, res.beta))) <= 1e-10 * w.sum()
    assert np.all(np.linalg.eigvalsh(res.jacobian) < 0)
