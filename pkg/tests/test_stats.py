import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from kpz_shock_lab.rng import StreamKey, normals
from kpz_shock_lab.stats import (TW_GOE_MEAN, TW_GOE_VAR, DistTable, fit_scaling, gamma_cdf, gaussian_cdf,
                                 ks_distance, ks_two_sample, spread, tw_goe_cdf, tw_goe_diff_table, tw_goe_table,
                                 weighted_quantile, weighted_var)


def _gamma_series(a, x, terms=200):
    term = 1.0 / math.gamma(a + 1)
    s = 0.0
    for k in range(terms):
        s += term
        term *= x / (a + k + 1)
    return x**a * math.exp(-x) * s


@pytest.mark.parametrize("a,x", [(0.5, 0.3), (1.0, 1.0), (2.0, 1.7), (3.5, 6.0), (0.2, 0.01)])
def test_gamma_cdf_against_series(a, x):
    assert gamma_cdf(x, a) == pytest.approx(_gamma_series(a, x), rel=1e-12)


def test_simple_cdf_values():
    assert gaussian_cdf(0.0) == 0.5
    assert gaussian_cdf(2.0, 2.0, 9.0) == 0.5
    assert gamma_cdf(1.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert gamma_cdf(-1.0, 2.0) == 0.0
    assert gamma_cdf(2.0, 1.0, 0.5) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    with pytest.raises(ValueError):
        gaussian_cdf(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        gamma_cdf(1.0, 0.0)


def test_ks_within_dkw_band():
    n = 20_000
    z = normals(StreamKey(13), 0, 0, n)
    # DKW: P(D > eps) <= 2 exp(-2 n eps^2); take a 1e-4 level
    eps = math.sqrt(math.log(2 / 1e-4) / (2 * n))
    assert ks_distance(z, gaussian_cdf) < eps


def test_ks_examples():
    assert ks_distance(np.zeros(20), gaussian_cdf) == pytest.approx(0.5)
    n = 99
    q = special.ndtri(np.arange(1, n + 1) / (n + 1))
    assert ks_distance(q, gaussian_cdf) <= 1 / (n + 1) + 1e-12
    assert ks_two_sample(np.arange(10), np.arange(10)) == 0.0
    assert ks_two_sample(np.arange(10), np.arange(10) + 100) == 1.0
    with pytest.raises(ValueError):
        ks_distance(np.zeros(5), gaussian_cdf)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0), st.floats(-3, 3))
def test_ks_invariant_under_increasing_maps(seed, a, b):
    z = normals(StreamKey(seed), 0, 0, 200)
    d0 = ks_distance(z, gaussian_cdf)
    d1 = ks_distance(a * z + b, lambda v: gaussian_cdf((v - b) / a))
    d2 = ks_distance(np.exp(z), lambda v: gaussian_cdf(np.log(v)))
    assert d1 == pytest.approx(d0, abs=1e-12)
    assert d2 == pytest.approx(d0, abs=1e-12)


def test_tw_goe_table_moments():
    tab = tw_goe_table()
    m, v = tab.moments()
    assert m == pytest.approx(TW_GOE_MEAN, abs=2e-3)
    assert v == pytest.approx(TW_GOE_VAR, abs=5e-3)
    assert tab(-1.0) == pytest.approx(tw_goe_cdf(-1.0), abs=1e-8)
    assert tab(tab.xs[0]) < 1e-10 and 1 - tab(tab.xs[-1]) < 1e-7


def test_tw_difference_table():
    d = tw_goe_diff_table()
    m, v = d.moments()
    assert abs(m) < 1e-6
    assert d.cdf[-1] - d.cdf[0] > 1 - 1e-6
    # (X1 - X2) / 2 has variance Var(X) / 2
    assert v == pytest.approx(TW_GOE_VAR / 2, abs=5e-3)
    # symmetric law
    xs = np.linspace(-3, 3, 13)
    assert np.allclose(d(xs) + d(-xs), 1.0, atol=1e-6)
    s = d.scaled(0.5)
    assert s(1.0) == pytest.approx(d(2.0))
    r = d.scaled(-1.0)
    assert r(0.7) == pytest.approx(1 - d(-0.7), abs=1e-12)


def test_table_round_trip(tmp_path):
    tab = DistTable(np.array([0.0, 0.1, 0.3]), np.array([0.0, 0.25, 1.0]), {"source": "unit"})
    p = tmp_path / "t.csv"
    tab.write_csv(p)
    back = DistTable.read_csv(p)
    assert np.array_equal(back.xs, tab.xs) and np.array_equal(back.cdf, tab.cdf)
    assert back.provenance == {"source": "unit"}
    with pytest.raises(ValueError):
        DistTable(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        DistTable(np.array([0.0, 1.0]), np.array([0.6, 0.5]))


def test_fit_scaling_examples():
    t = np.array([1.0, 2.0, 4.0, 8.0])
    f = fit_scaling(zip(t, 3.0 * t ** (1 / 3)))
    assert f.exponent == pytest.approx(1 / 3, abs=1e-12)
    assert f.prefactor == pytest.approx(3.0, rel=1e-12)
    assert f.r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_scaling([(1.0, 1.0), (1.0, 2.0)])
    with pytest.raises(ValueError):
        fit_scaling([(1.0, 1.0), (2.0, -1.0)])


def test_spread_and_weighted_helpers():
    x = np.arange(1.0, 6.0)
    assert spread(x, "iqr") == pytest.approx(2.0)
    assert spread(x, "std") == pytest.approx(np.std(x, ddof=1))
    with pytest.raises(ValueError):
        spread(x, "mad")
    w = np.ones(5)
    assert weighted_var(x, w) == pytest.approx(np.var(x))
    assert weighted_var(x, [0, 0, 1, 0, 0]) == 0.0
    assert weighted_quantile(x, w, 0.5) == pytest.approx(3.0, abs=0.5)
