import math

import numpy as np
import pytest
from scipy.stats import qmc

from rfaug.dataset import WaveformClass
from rfaug.density import (KdeFitError, KdeModel, KdeSampleError, kde_fit, kde_pdf, kde_sample, load_kdes,
                           save_kdes, scott_factor)
from rfaug.rng import rng_for

B = WaveformClass.BPSK


def param_cloud(n, seed=0):
    """Correlated (snr, fo, srm) points well inside the valid region."""
    rng = rng_for(seed, "cloud")
    z = rng.standard_normal((n, 3))
    mix = np.array([[1.0, 0.0, 0.0], [0.6, 1.0, 0.0], [-0.6, -0.6, 1.0]])
    z = z @ mix.T
    return np.column_stack([10 + 4 * z[:, 0], 0.02 * z[:, 1], 5 + 0.8 * z[:, 2]])


def test_scott_factor():
    assert scott_factor(1000, 3) == pytest.approx(0.3728, abs=1e-4)
    assert kde_fit(param_cloud(1000), B).bandwidth_factor == pytest.approx(1000 ** (-1 / 7))


def test_fit_errors():
    with pytest.raises(KdeFitError):
        kde_fit(param_cloud(7), B)
    t = np.linspace(0, 1, 50)
    with pytest.raises(KdeFitError):
        kde_fit(np.column_stack([t, 2 * t, 3 * t + 1]), B)
    bad = param_cloud(20)
    bad[3, 1] = np.nan
    with pytest.raises(KdeFitError):
        kde_fit(bad, B)
    with pytest.raises(KdeFitError):
        kde_fit(np.zeros((20, 2)), B)


def test_pdf_standard_normal_at_origin():
    pts = rng_for(1, "sn").standard_normal((10**4, 3))
    m = kde_fit(pts, B)
    h = m.bandwidth_factor
    want = (2 * math.pi) ** -1.5 * (1 + h * h) ** -1.5
    assert kde_pdf(m, [0, 0, 0]) == pytest.approx(want, rel=0.15)


def test_pdf_far_point():
    m = kde_fit(param_cloud(100), B)
    assert kde_pdf(m, [1000.0, 0.0, 5.0]) < 1e-12


def test_pdf_two_point_closed_form():
    pts = np.array([[0.0, 0.0, 0.0], [2.0, 1.0, -1.0]])
    cov = np.array([[1.0, 0.2, 0.0], [0.2, 0.5, 0.1], [0.0, 0.1, 0.3]])
    m = KdeModel(B, pts, 0.7, cov)
    k = 0.49 * cov
    mid = pts.mean(axis=0)
    inv = np.linalg.inv(k)
    vals = [math.exp(-0.5 * (mid - p) @ inv @ (mid - p)) for p in pts]
    want = np.mean(vals) / math.sqrt((2 * math.pi) ** 3 * np.linalg.det(k))
    assert kde_pdf(m, mid) == pytest.approx(want, rel=1e-12)


def test_pdf_integrates_to_one():
    m = kde_fit(param_cloud(50), B)
    lo = m.points.min(axis=0) - 6 * np.sqrt(np.diag(m.kernel_cov))
    hi = m.points.max(axis=0) + 6 * np.sqrt(np.diag(m.kernel_cov))
    # scrambled Sobol points: Monte-Carlo over the box with low discrepancy
    u = lo + (hi - lo) * qmc.Sobol(3, scramble=True, seed=2).random(1 << 15)
    est = np.mean(kde_pdf(m, u)) * np.prod(hi - lo)
    assert est == pytest.approx(1.0, abs=0.02)


def test_pdf_permutation_invariant():
    pts = param_cloud(60)
    a = kde_fit(pts, B)
    b = kde_fit(pts[rng_for(3, "p").permutation(60)], B)
    q = param_cloud(5, seed=9)
    assert np.allclose(kde_pdf(a, q), kde_pdf(b, q), rtol=1e-12, atol=0)


def test_zero_bandwidth_resamples_points():
    pts = param_cloud(30)
    m = KdeModel(B, pts, 0.0, np.cov(pts, rowvar=False))
    draws = kde_sample(m, 500, seed=1)
    rows = {tuple(p) for p in pts}
    assert all(tuple(d) in rows for d in draws)


def test_sample_mean_and_covariance():
    m = kde_fit(param_cloud(1000), B)
    draws = kde_sample(m, 10**5, seed=4)
    se = np.sqrt(np.diag(np.cov(draws, rowvar=False)) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - m.points.mean(axis=0)) < 3 * se)
    want = (1 + m.bandwidth_factor**2) * m.data_cov
    got = np.cov(draws, rowvar=False)
    assert np.all(np.abs(got - want) <= 0.05 * np.abs(want))


def test_sample_deterministic():
    m = kde_fit(param_cloud(100), B)
    assert np.array_equal(kde_sample(m, 50, 7), kde_sample(m, 50, 7))
    assert not np.array_equal(kde_sample(m, 50, 7), kde_sample(m, 50, 8))


def test_sample_histogram_matches_pdf():
    m = kde_fit(param_cloud(20, seed=5), B)
    n = 10**6
    draws = kde_sample(m, n, seed=6)
    lo = draws.mean(axis=0) - 2.5 * draws.std(axis=0)
    hi = draws.mean(axis=0) + 2.5 * draws.std(axis=0)
    edges = [np.linspace(lo[d], hi[d], 6) for d in range(3)]
    counts, _ = np.histogramdd(draws, bins=edges)
    # cell probabilities by midpoint quadrature, 12 points per axis per cell
    sub = 12
    fine = [np.concatenate([e[i] + (np.arange(sub) + 0.5) * (e[i + 1] - e[i]) / sub for i in range(5)])
            for e in edges]
    g = np.stack(np.meshgrid(*fine, indexing="ij"), axis=-1).reshape(-1, 3)
    dens = kde_pdf(m, g).reshape(5 * sub, 5 * sub, 5 * sub)
    vol = np.prod([(e[1] - e[0]) / sub for e in edges])
    prob = dens.reshape(5, sub, 5, sub, 5, sub).sum(axis=(1, 3, 5)) * vol
    sigma = np.sqrt(n * prob * (1 - prob))
    # the 3-sigma bound needs the normal approximation: skip near-empty corner cells
    used = n * prob >= 50
    assert used.sum() >= 60
    assert np.all(np.abs(counts - n * prob)[used] <= 3 * sigma[used])


def test_invalid_draws_are_redrawn():
    pts = param_cloud(40)
    pts[:, 2] = 1.05 + 0.05 * rng_for(0, "s").random(40)  # srm hugging the validity edge
    m = kde_fit(pts, B)
    d = kde_sample(m, 2000, seed=1)
    assert np.all(d[:, 2] > 1.0) and np.all(np.abs(d[:, 1]) < 0.5)


def test_hopeless_model_raises():
    pts = param_cloud(40)
    pts[:, 2] = pts[:, 2] - 10  # srm around -5
    m = kde_fit(pts, B)
    with pytest.raises(KdeSampleError):
        kde_sample(m, 10, seed=1)


def test_json_round_trip(tmp_path):
    models = {c: kde_fit(param_cloud(30, seed=i), c) for i, c in enumerate([B, WaveformClass.NOISE])}
    save_kdes(models, tmp_path / "k.json")
    back = load_kdes(tmp_path / "k.json")
    assert set(back) == set(models)
    for c in models:
        assert np.array_equal(back[c].points, models[c].points)
        assert back[c].bandwidth_factor == models[c].bandwidth_factor
        assert np.array_equal(kde_sample(back[c], 20, 3), kde_sample(models[c], 20, 3))
