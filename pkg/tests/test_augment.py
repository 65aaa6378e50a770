import math

import numpy as np
import pytest
from scipy.stats import chi2

from rfaug.augment import (N_STORED, AugmentStrategy, augment_observation, augment_parent, build_augmented,
                           child_index, draw_target, draw_uniform, precompute_augmentations, select_augmented)
from rfaug.channel import complex_noise
from rfaug.dataset import (OBS_LEN, Dataset, IqObservation, Manifest, NuisanceParams, ObservationMeta, Source,
                           WaveformClass, get_space)
from rfaug.density import kde_fit
from rfaug.rng import derive_id, rng_for
from rfaug.waveforms import ModulatorConfig, gen_linear

from conftest import peak_freq, tone

B, N = WaveformClass.BPSK, WaveformClass.NOISE


def parent(samples, snr=20.0, fo=0.0, srm=4.0, cls=B, i=0):
    meta = ObservationMeta(derive_id("parent", i), cls, Source.CAPTURE, NuisanceParams(snr, fo, srm))
    return IqObservation(np.asarray(samples, np.complex64), meta)


def capture_set(n_parents, seed=0):
    space = get_space("phi3")
    metas, rows = [], []
    for i in range(n_parents):
        cls = space.classes[i % 3]
        x = gen_linear(ModulatorConfig.default(B, 4), OBS_LEN, ("p", i)) if cls is not N else \
            complex_noise(OBS_LEN, 1.0, ("p", i))
        metas.append(ObservationMeta(derive_id("cap", seed, i), cls, Source.CAPTURE,
                                     NuisanceParams(15.0, 0.01, 4.0)))
        rows.append(x)
    return Dataset(Manifest("Ω_C", space, tuple(metas), seed), np.stack(rows))


# ---------------------------------------------------------------- targets

def test_uniform_draw_ranges_and_independence():
    d = draw_uniform(rng_for(0, "u"), 10**5)
    assert d[:, 0].min() >= 0 and d[:, 0].max() <= 20
    assert d[:, 1].min() >= -0.1 and d[:, 1].max() <= 0.1
    assert d[:, 2].min() >= 2 and d[:, 2].max() <= 8
    c = np.corrcoef(d, rowvar=False)
    assert np.max(np.abs(c[np.triu_indices(3, 1)])) < 0.01


def test_draw_target_uniform_matches_draw_uniform_and_repeats():
    s = AugmentStrategy.uniform()
    t = draw_target(s, B, ("x", 1))
    assert t == draw_target(s, B, ("x", 1))
    assert t != draw_target(s, B, ("x", 2))
    assert t.as_tuple() == tuple(draw_uniform(rng_for("x", 1)))


def test_draw_target_kde_delegates():
    rng = rng_for(1, "pts")
    pts = np.column_stack([rng.normal(10, 3, 400), rng.normal(0, 0.02, 400), rng.normal(5, 0.5, 400)])
    pts[:, 2] += 0.3 * pts[:, 0] / 3
    model = kde_fit(pts, B)
    s = AugmentStrategy.from_kdes({B: model})
    g = rng_for(2, "draws")
    draws = np.array([draw_target(s, B, g).as_tuple() for _ in range(20000)])
    se = np.sqrt(np.diag(model.kernel_cov + model.data_cov) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - pts.mean(axis=0)) < 4 * se)
    want = (1 + model.bandwidth_factor**2) * model.data_cov
    assert np.allclose(np.diag(np.cov(draws, rowvar=False)), np.diag(want), rtol=0.05)
    with pytest.raises(KeyError):
        draw_target(s, N, 0)


def test_strategy_kind_checked():
    with pytest.raises(ValueError):
        AugmentStrategy("gan")


# ---------------------------------------------------------------- nulling rules

def test_snr_raise_is_nulled():
    p = parent(tone(0.01, OBS_LEN), snr=5.0)
    rec = augment_observation(p, NuisanceParams(10.0, 0.0, 4.0), seed=1)
    assert not rec.snr_applied
    assert rec.child.meta.params_est.snr_db == 5.0


def test_srm_decimation_below_window_is_nulled():
    p = parent(tone(0.01, OBS_LEN), srm=8.0)
    rec = augment_observation(p, NuisanceParams(20.0, 0.0, 2.0), seed=1)
    assert not rec.srm_applied
    assert rec.child.meta.params_est.srm == 8.0
    assert rec.child.samples.shape == (OBS_LEN,)


def test_identity_target_reproduces_parent():
    x = gen_linear(ModulatorConfig.default(B, 4), OBS_LEN, 3)
    p = parent(x, snr=15.0, fo=0.02, srm=4.0)
    rec = augment_observation(p, p.meta.params_est, seed=2)
    assert rec.snr_applied and rec.srm_applied and rec.fo_applied
    assert np.max(np.abs(rec.child.samples - p.samples)) < 1e-3


def test_fo_is_moved_to_target_at_the_new_rate():
    # parent tone sits exactly at its estimated FO; after SRM x2 it sits at half that
    p = parent(tone(0.04, OBS_LEN), snr=math.inf, fo=0.04, srm=4.0)
    rec = augment_observation(p, NuisanceParams(math.inf, -0.07, 8.0), seed=0)
    assert rec.srm_applied
    f, bin_w = peak_freq(rec.child.samples)
    assert abs(f - (-0.07)) <= bin_w
    assert rec.child.meta.params_est.fo_frac == -0.07


def test_upsampling_keeps_first_window():
    x = tone(0.02, OBS_LEN)
    p = parent(x, snr=math.inf, fo=0.0, srm=3.0)
    rec = augment_observation(p, NuisanceParams(math.inf, 0.0, 6.0), seed=0)
    ref = tone(0.01, OBS_LEN)
    # compare away from the resampler's start-up transient
    assert np.max(np.abs(rec.child.samples[64:512] - ref[64:512])) < 1e-3


def test_noise_class_never_resampled():
    x = complex_noise(OBS_LEN, 1.0, 5)
    p = parent(x, cls=N, srm=3.0)
    rec = augment_observation(p, NuisanceParams(25.0, 0.0, 7.0), seed=0)
    assert not rec.srm_applied and rec.child.meta.params_est.srm == 3.0


@pytest.mark.parametrize("est, target", [(20.0, 5.0), (10.0, 0.0), (math.inf, 12.0), (3.0, -5.0)])
def test_child_snr_matches_metadata(est, target):
    # ground truth: unit-power clean signal plus known noise
    snrs = []
    for k in range(20):
        clean = np.exp(2j * np.pi * rng_for(k, "ph").random(OBS_LEN))
        noise0 = complex_noise(OBS_LEN, 0.0 if est == math.inf else 10 ** (-est / 10), ("n0", k))
        p = parent(clean + noise0, snr=est, fo=0.0, srm=4.0, i=k)
        rec = augment_observation(p, NuisanceParams(target, 0.0, 4.0), seed=("n1", k))
        assert rec.snr_applied
        total_noise = rec.child.samples - clean.astype(np.complex64)
        snrs.append(10 * np.log10(1.0 / np.mean(np.abs(total_noise) ** 2)))
    assert abs(np.mean(snrs) - target) <= 0.5


def test_nulling_recomputation_property():
    x = gen_linear(ModulatorConfig.default(B, 4), OBS_LEN, 4)
    est = NuisanceParams(12.0, 0.01, 4.0)
    p = parent(x, *est.as_tuple())
    rng = rng_for(9, "targets")
    for k in range(60):
        t = NuisanceParams(rng.uniform(0, 20), rng.uniform(-0.1, 0.1), rng.uniform(2, 8))
        rec = augment_observation(p, t, seed=k)
        got = rec.child.meta.params_est
        assert rec.snr_applied == (t.snr_db <= est.snr_db)
        assert rec.srm_applied == (t.srm >= est.srm)
        assert got.snr_db == (t.snr_db if rec.snr_applied else est.snr_db)
        assert got.srm == (t.srm if rec.srm_applied else est.srm)
        assert got.fo_frac == t.fo_frac
        assert rec.child.meta.parent_id == p.meta.id and rec.parent_id == p.meta.id


# ---------------------------------------------------------------- pools and selection

def test_augment_parent_children_are_order_independent():
    p = parent(gen_linear(ModulatorConfig.default(B, 4), OBS_LEN, 1))
    a = augment_parent(p, AugmentStrategy.uniform(), seed=3)
    b = augment_parent(p, AugmentStrategy.uniform(), seed=3, n_store=4)
    assert len(a) == N_STORED
    for ra, rb in zip(a, b):
        assert ra.child.meta == rb.child.meta
        assert np.array_equal(ra.child.samples, rb.child.samples)
    assert [child_index(r.child.meta) for r in a] == list(range(N_STORED))


def test_build_augmented_factor_ten():
    cap = capture_set(100)
    out = build_augmented(cap, AugmentStrategy.uniform(), 10, seed=0)
    assert len(out) == 1000
    per = {}
    for e in out.manifest.entries:
        per[e.parent_id] = per.get(e.parent_id, 0) + 1
        assert e.source is Source.AUGMENTED
    assert set(per) == set(cap.manifest.ids) and set(per.values()) == {10}


def test_factor_three_selection_is_uniform():
    cap = capture_set(3)
    pool = precompute_augmentations(cap, AugmentStrategy.uniform(), seed=0)
    counts = np.zeros(N_STORED)
    n_seeds = 1500
    for s in range(n_seeds):
        sel = select_augmented(pool.manifest, cap.manifest, 3, seed=s)
        assert len(sel) == 9
        for e in sel.entries:
            counts[child_index(e)] += 1
    expected = n_seeds * 3 * 3 / N_STORED
    stat = np.sum((counts - expected) ** 2 / expected)
    assert stat < chi2.ppf(0.999, N_STORED - 1)


def test_selection_links_to_present_parents_only():
    cap = capture_set(12)
    pool = precompute_augmentations(cap, AugmentStrategy.uniform(), seed=0)
    subset = cap.manifest.with_entries(cap.manifest.entries[:5])
    sel = select_augmented(pool.manifest, subset, 4, seed=1)
    assert {e.parent_id for e in sel.entries} == set(subset.ids)
    assert set(sel.ids) <= set(pool.manifest.ids)
    ds = pool.select(sel)
    assert np.array_equal(ds.samples, pool.rows(sel.ids))


def test_factor_range_and_parent_source():
    cap = capture_set(3)
    for bad in (0, 11):
        with pytest.raises(ValueError):
            build_augmented(cap, AugmentStrategy.uniform(), bad, seed=0)
    pool = precompute_augmentations(cap, AugmentStrategy.uniform(), seed=0)
    with pytest.raises(ValueError):
        precompute_augmentations(pool, AugmentStrategy.uniform(), seed=0)


def test_pool_is_deterministic():
    cap = capture_set(3)
    a = precompute_augmentations(cap, AugmentStrategy.uniform(), seed=5)
    b = precompute_augmentations(cap, AugmentStrategy.uniform(), seed=5)
    assert a.manifest == b.manifest and a.samples.tobytes() == b.samples.tobytes()
    assert a.manifest.name == "Ω_AS"
