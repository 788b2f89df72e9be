import numpy as np
import pytest
from scipy import stats

from pbbound.cjbound import cj_bound, cj_bound_sweep
from pbbound.core import MetaDataset, Study
from pbbound.statkernel import rng_for


def _dataset(y, s):
    return MetaDataset(tuple(Study(float(a), float(b)) for a, b in zip(y, s)))


def _random_dataset(rng, n):
    s = np.exp(rng.standard_normal(n) * 0.5)
    y = rng.standard_normal(n)
    return _dataset(y, s)


def _expectation_form(data, tau, p):
    # independent evaluation via the expectation (mean-ratio) form with
    # scipy's normal functions
    sigma = np.sqrt(data.s.astype(float) ** 2 + tau ** 2)
    e_inv = np.mean(1.0 / sigma)
    e_inv2 = np.mean(1.0 / sigma ** 2)
    return (e_inv / e_inv2) * stats.norm.pdf(stats.norm.ppf(p)) / p


def test_matches_expectation_form():
    rng = rng_for(2024)
    for trial in range(50):
        data = _random_dataset(rng, int(rng.integers(2, 30)))
        tau = float(rng.uniform(0.0, 2.0))
        p = float(rng.uniform(0.01, 0.99))
        r = cj_bound(data, tau, p)
        u = _expectation_form(data, tau, p)
        assert r.upper == pytest.approx(u, abs=1e-10)
        assert r.lower == pytest.approx(-u, abs=1e-10)


def test_zero_at_p_one():
    data = _dataset([0.2, -0.1, 0.4], [0.5, 1.0, 1.5])
    r = cj_bound(data, 0.3, 1.0)
    assert r.lower == 0.0 and r.upper == 0.0
    assert r.width == 0.0


def test_strictly_decreasing_in_p():
    data = _dataset([0.2, -0.1, 0.4], [0.5, 1.0, 1.5])
    grid = np.linspace(0.05, 1.0, 40)
    uppers = [b.upper for b in cj_bound_sweep(data, 0.4, grid)]
    assert all(a > b for a, b in zip(uppers, uppers[1:]))


def test_symmetric_interval():
    data = _dataset([1.0, 2.0], [0.3, 0.9])
    r = cj_bound(data, 0.0, 0.5)
    assert r.lower == -r.upper
    assert r.method == "CJ"
    assert r.tau_used == 0.0


def test_scale_equivariance():
    data = _dataset([0.2, -0.1, 0.4], [0.5, 1.0, 1.5])
    r1 = cj_bound(data, 0.4, 0.3)
    scaled = _dataset(3.0 * data.y, 3.0 * data.s)
    r2 = cj_bound(scaled, 1.2, 0.3)
    assert r2.upper == pytest.approx(3.0 * r1.upper, rel=1e-12)


def test_tau_increases_bound():
    # larger tau inflates sigma, and with it the bound's sigma-ratio,
    # whenever the s_i are heterogeneous
    data = _dataset([0.0, 0.0, 0.0], [0.3, 1.0, 2.5])
    u0 = cj_bound(data, 0.0, 0.5).upper
    u1 = cj_bound(data, 1.0, 0.5).upper
    assert u1 > u0


def test_input_validation():
    data = _dataset([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        cj_bound(data, 0.1, 0.0)
    with pytest.raises(ValueError):
        cj_bound(data, 0.1, 1.5)
    with pytest.raises(ValueError):
        cj_bound(data, -0.1, 0.5)
