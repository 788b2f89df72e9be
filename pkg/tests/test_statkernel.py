import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pbbound.statkernel import (Phi, Phi_inv, antithetic_normal, find_root,
                                mills_factor, phi, rng_for, sample_lognormal,
                                sample_normal)


def test_phi_matches_scipy():
    x = np.linspace(-8, 8, 101)
    np.testing.assert_allclose(phi(x), stats.norm.pdf(x), rtol=1e-13)
    np.testing.assert_allclose(Phi(x), stats.norm.cdf(x), rtol=1e-12)


def test_phi_scalar_type():
    assert isinstance(phi(0.3), float)
    assert isinstance(Phi(0.3), float)
    assert isinstance(Phi_inv(0.3), float)


@given(st.floats(1e-12, 1.0 - 1e-12))
@settings(max_examples=200, deadline=None)
def test_phi_inv_round_trip(q):
    assert Phi(Phi_inv(q)) == pytest.approx(q, abs=1e-12)


def test_phi_inv_domain():
    with pytest.raises(ValueError):
        Phi_inv(0.0)
    with pytest.raises(ValueError):
        Phi_inv(1.0)
    with pytest.raises(ValueError):
        Phi_inv(-0.5)


def test_mills_factor_limits_and_monotone():
    assert mills_factor(1.0) == 0.0
    grid = np.linspace(0.01, 0.999, 300)
    vals = [mills_factor(p) for p in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        mills_factor(0.0)
    with pytest.raises(ValueError):
        mills_factor(1.5)


def test_mills_factor_known_value():
    # phi(0)/0.5 = 2 / sqrt(2 pi)
    assert mills_factor(0.5) == pytest.approx(2.0 / np.sqrt(2 * np.pi), abs=1e-12)


def test_rng_for_deterministic_and_distinct():
    a = rng_for(7, 1, 500).standard_normal(5)
    b = rng_for(7, 1, 500).standard_normal(5)
    c = rng_for(7, 2, 500).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_normal_shape_and_seeding():
    x = sample_normal(3, 1000)
    assert x.shape == (1000,)
    np.testing.assert_array_equal(x, sample_normal(3, 1000))
    assert abs(x.mean()) < 0.15


def test_sample_lognormal_mean():
    x = sample_lognormal(11, 0.0, 0.5, 200_000)
    assert np.all(x > 0)
    # E[LN(0, 0.5)] = exp(0.125)
    assert x.mean() == pytest.approx(np.exp(0.125), rel=0.01)
    with pytest.raises(ValueError):
        sample_lognormal(1, 0.0, -1.0, 10)


def test_antithetic_normal_exact_mean_zero():
    rng = rng_for(5)
    for n in (2, 3, 10, 11, 200):
        x = antithetic_normal(rng, n)
        assert x.size == n
        assert np.all(np.diff(x) >= 0)
        assert abs(x.sum()) < 1e-12
    with pytest.raises(ValueError):
        antithetic_normal(rng, 1)


def test_find_root_basic():
    r = find_root(lambda x: x ** 3 - 2.0, 0.0, 3.0)
    assert r == pytest.approx(2.0 ** (1 / 3), abs=1e-9)
    assert find_root(lambda x: x, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        find_root(lambda x: x * x + 1.0, -1.0, 1.0)
