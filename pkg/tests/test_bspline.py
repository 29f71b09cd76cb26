import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.interpolate import BSpline

from oddscal.bspline import (
    BSplineBasis,
    KnotVector,
    basis_matrix,
    basis_totals,
    evaluate_basis,
    make_basis,
    place_knots,
)
from oddscal.errors import DegenerateAuxiliary


def scipy_design(basis, z):
    kv = basis.knots
    t = kv.full_sequence()
    zc = np.clip(z, kv.boundary_low, kv.boundary_high)
    return BSpline.design_matrix(zc, t, kv.order - 1).toarray()


def brute_quantile(z, p):
    # smallest value whose empirical CDF reaches p
    zs = np.sort(z)
    ecdf = np.arange(1, zs.size + 1) / zs.size
    return zs[np.argmax(ecdf >= p - 1e-12)]


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("K", [0, 1, 4, 15])
def test_matches_scipy_design_matrix(rng, K, m):
    pop = rng.normal(size=800)
    basis = make_basis(pop, K, m)
    z = np.concatenate([rng.uniform(pop.min(), pop.max(), 300), basis.knots.interior,
                        [pop.min(), pop.max()]])
    np.testing.assert_allclose(basis_matrix(basis, z), scipy_design(basis, z), atol=1e-12)


def test_dimensions_and_q():
    basis = make_basis(np.arange(100.0), K=15, m=3)
    assert basis.q == 18
    assert basis_matrix(basis, np.linspace(0, 99, 7)).shape == (7, 18)
    assert evaluate_basis(basis, 3.0).shape == (18,)
    assert basis(np.array([1.0, 2.0])).shape == (2, 18)


def test_knots_are_type1_quantiles(rng):
    for N in (37, 100, 999):
        z = rng.exponential(size=N)
        K = 9
        kv = place_knots(z, K, 3)
        expected = [brute_quantile(z, j / (K + 1)) for j in range(1, K + 1)]
        np.testing.assert_array_equal(kv.interior, expected)
        assert kv.boundary_low == z.min() and kv.boundary_high == z.max()


def test_quantile_at_exact_fraction():
    # N divisible by K+1: the j/(K+1) quantile is the (jN/(K+1))-th order statistic
    z = np.arange(1.0, 101.0)
    kv = place_knots(z, 3, 2)
    assert kv.interior == (25.0, 50.0, 75.0)


def test_tied_knots_collapse_with_warning():
    z = np.array([0.0] * 50 + [1.0] * 50 + list(np.linspace(2, 3, 20)))
    with pytest.warns(RuntimeWarning, match="collapsed"):
        kv = place_knots(z, 5, 3)
    assert kv.n_interior < 5
    assert len(set(kv.interior)) == kv.n_interior


def test_degenerate_auxiliary():
    with pytest.raises(DegenerateAuxiliary):
        place_knots(np.array([1.0, 1.0, 2.0, 2.0]), K=3, m=3)
    with pytest.raises(DegenerateAuxiliary):
        make_basis(np.full(10, 4.0), K=0, m=2)
    # a constant auxiliary still admits the single-stratum m = 1 basis
    B = basis_matrix(make_basis(np.full(10, 4.0), K=0, m=1), np.full(3, 4.0))
    np.testing.assert_array_equal(B, np.ones((3, 1)))


def test_invalid_knot_vectors():
    with pytest.raises(ValueError):
        KnotVector((2.0, 1.0), 0.0, 3.0, 3)
    with pytest.raises(ValueError):
        KnotVector((0.0,), 0.0, 3.0, 3)
    with pytest.raises(ValueError):
        KnotVector((), 0.0, 1.0, 0)


def test_clamping_outside_range(rng):
    basis = make_basis(rng.uniform(size=200), K=4, m=3)
    lo, hi = basis.knots.boundary_low, basis.knots.boundary_high
    np.testing.assert_array_equal(evaluate_basis(basis, lo - 5), evaluate_basis(basis, lo))
    np.testing.assert_array_equal(evaluate_basis(basis, hi + 5), evaluate_basis(basis, hi))
    assert evaluate_basis(basis, hi)[-1] == pytest.approx(1.0)
    assert evaluate_basis(basis, lo)[0] == pytest.approx(1.0)


def test_order_one_is_post_stratification(rng):
    pop = rng.normal(size=500)
    basis = make_basis(pop, K=4, m=1)
    kv = basis.knots
    z = rng.normal(size=1000)
    B = basis_matrix(basis, z)
    edges = np.asarray(kv.interior)
    stratum = np.searchsorted(edges, np.clip(z, kv.boundary_low, kv.boundary_high), side="right")
    np.testing.assert_array_equal(B, np.eye(basis.q)[stratum])
    # totals are the stratum population counts
    pop_stratum = np.searchsorted(edges, pop, side="right")
    np.testing.assert_array_equal(basis_totals(basis, pop), np.bincount(pop_stratum, minlength=basis.q))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_greville_reproduces_z(rng, m):
    pop = rng.gamma(2.0, size=400)
    basis = make_basis(pop, K=6, m=m)
    z = rng.uniform(pop.min(), pop.max(), 200)
    np.testing.assert_allclose(basis_matrix(basis, z) @ basis.knots.greville(), z, atol=1e-10)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(
    pop=hnp.arrays(float, st.integers(30, 200), elements=finite, unique=True),
    K=st.integers(0, 8),
    m=st.integers(1, 5),
    pts=hnp.arrays(float, 20, elements=finite),
)
def test_basis_properties(pop, K, m, pts):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = make_basis(pop, K, m)
    B = basis_matrix(basis, pts)
    assert np.all(B >= -1e-12)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-10)
    # local support: at most m nonzero values, all adjacent
    for row in B:
        nz = np.flatnonzero(row > 1e-14)
        assert nz.size <= m
        if nz.size:
            assert nz[-1] - nz[0] < m


@given(pop=hnp.arrays(float, st.integers(20, 80), elements=finite, unique=True), m=st.integers(2, 4))
def test_basis_totals_sum_to_N(pop, m):
    basis = make_basis(pop, 3, m)
    assert basis_totals(basis, pop).sum() == pytest.approx(pop.size)
    assert isinstance(basis, BSplineBasis)
