import math

import numpy as np
import pytest
from scipy import special, stats as sps

from rfaug.rng import rng_for
from rfaug.stats import betainc_reg, t_cdf, t_ppf, t_sf_two_sided, welch_ttest


def test_reference_example():
    r = welch_ttest([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    assert r.t == pytest.approx(-1.897, abs=1e-3)
    assert r.dof == pytest.approx(5.88, abs=1e-2)
    assert r.p == pytest.approx(0.107, abs=1e-3)
    assert (r.mean_a, r.mean_b, r.var_a, r.var_b, r.n_a, r.n_b) == (3, 6, 2.5, 10, 5, 5)


def test_matches_scipy_welch():
    rng = rng_for(0, "welch")
    for _ in range(50):
        a = rng.normal(0, rng.uniform(0.1, 3), rng.integers(2, 30))
        b = rng.normal(rng.normal(), rng.uniform(0.1, 3), rng.integers(2, 30))
        ours = welch_ttest(a, b)
        ref = sps.ttest_ind(a, b, equal_var=False)
        assert ours.t == pytest.approx(ref.statistic, rel=1e-12)
        assert ours.p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-14)


def test_equal_means_give_t_zero():
    a = [1.0, 2.0, 3.0, 6.0]
    b = [5.0, 1.0, 4.0, 2.0, 3.0]  # same mean, different spread
    r = welch_ttest(a, b)
    assert r.t == 0 and r.p == pytest.approx(1.0, abs=1e-14)


def test_scale_invariance_and_antisymmetry():
    a, b = np.array([0.3, 0.5, 0.45, 0.6]), np.array([0.7, 0.65, 0.9, 0.8, 0.75])
    r = welch_ttest(a, b)
    s = welch_ttest(10 * a, 10 * b)
    assert (s.t, s.dof, s.p) == pytest.approx((r.t, r.dof, r.p), rel=1e-12)
    w = welch_ttest(b, a)
    assert w.t == -r.t and w.p == r.p and w.dof == r.dof


def test_degenerate_inputs():
    with pytest.raises(ValueError):
        welch_ttest([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        welch_ttest([2.0, 2.0, 2.0], [1.0, 2.0])


def test_incomplete_beta_against_scipy():
    rng = rng_for(1, "beta")
    for _ in range(300):
        a, b, x = rng.uniform(0.1, 60), rng.uniform(0.1, 60), rng.random()
        assert betainc_reg(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-10)
    assert betainc_reg(2, 3, 0) == 0 and betainc_reg(2, 3, 1) == 1


def test_t_distribution_against_scipy():
    for dof in (1, 2.5, 5.88, 30, 400):
        for t in (-12, -3, -1.897, -0.1, 0, 0.5, 2, 8):
            assert t_cdf(t, dof) == pytest.approx(sps.t.cdf(t, dof), abs=1e-10)
            assert t_sf_two_sided(t, dof) == pytest.approx(2 * sps.t.sf(abs(t), dof), abs=1e-10)
        for q in (0.025, 0.5, 0.9, 0.975):
            assert t_ppf(q, dof) == pytest.approx(sps.t.ppf(q, dof), abs=1e-8)
    assert t_sf_two_sided(0, 3) == 1.0
    assert math.isfinite(t_ppf(0.975, 1))
