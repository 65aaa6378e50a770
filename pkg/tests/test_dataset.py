import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfaug.dataset import (OBS_LEN, BalanceError, Dataset, IqObservation, NuisanceParams,
                           ObservationMeta, Source, SplitError, WaveformClass, balance_classes,
                           filter_min_snr, get_space, is_regular, slice_record, split_counts,
                           split_train_val, subsample_per_class)
from rfaug.rng import derive_id, rng_for

from conftest import make_manifest, make_meta

B, Q, N = WaveformClass.BPSK, WaveformClass.QPSK, WaveformClass.NOISE


# ---------------------------------------------------------------- slicing

@pytest.mark.parametrize("n, starts", [(3072, [0, 2048]), (1023, []), (5000, [0, 2048]), (1024, [0])])
def test_slice_record_counts_and_starts(n, starts):
    rec = np.arange(n).astype(np.complex64)
    out = slice_record(rec)
    assert out.shape == (len(starts), OBS_LEN)
    assert [int(w[0].real) for w in out] == starts


@settings(max_examples=200, deadline=None)
@given(n=st.integers(0, 5000), window=st.integers(1, 300), extra=st.integers(0, 300))
def test_slice_record_disjoint_and_count(n, window, extra):
    stride = window + extra
    out = slice_record(np.arange(n), window, stride)
    expected = max(0, (n - window) // stride + 1) if n >= window else 0
    assert len(out) == expected
    flat = out.ravel()
    assert len(np.unique(flat)) == flat.size


def test_slice_record_rejects_bad_geometry():
    with pytest.raises(ValueError):
        slice_record(np.zeros(10), 4, 3)
    with pytest.raises(ValueError):
        slice_record(np.zeros(10), 0, 3)


# ---------------------------------------------------------------- types

def test_nuisance_params_validation():
    NuisanceParams(float("inf"), 0.0, 2.0)
    for bad in [(float("nan"), 0, 2), (0, 0.5, 2), (0, 0, 0), (0, 0, float("inf"))]:
        with pytest.raises(ValueError):
            NuisanceParams(*bad)


def test_meta_json_round_trip_and_parent_rule():
    m = make_meta(3, B)
    assert ObservationMeta.from_json(m.to_json()) == m
    child = ObservationMeta(7, B, Source.AUGMENTED, m.params_est, parent_id=m.id, seed_path=("a", 1))
    assert ObservationMeta.from_json(child.to_json()) == child
    with pytest.raises(ValueError):
        ObservationMeta(8, B, Source.AUGMENTED, m.params_est)
    with pytest.raises(ValueError):
        ObservationMeta(8, B, Source.CAPTURE, m.params_est, parent_id=1)


def test_observation_requires_length_and_finite():
    meta = make_meta(0, B)
    with pytest.raises(ValueError):
        IqObservation(np.zeros(10, np.complex64), meta)
    bad = np.zeros(OBS_LEN, np.complex64)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        IqObservation(bad, meta)


def test_spaces():
    assert [len(get_space(s).classes) for s in ("phi3", "phi5", "phi10")] == [3, 5, 10]
    with pytest.raises(ValueError):
        get_space("phi4")


def test_is_regular():
    x = np.ones(OBS_LEN, np.complex64)
    assert is_regular(x)
    x[5] = 100
    assert not is_regular(x)
    x[5] = np.inf
    assert not is_regular(x)


# ---------------------------------------------------------------- SNR filter

def test_filter_min_snr_boundary():
    m = make_manifest({B: 4}, snrs=[-12, -10, -9.9, 40])
    out = filter_min_snr(m)
    assert sorted(e.params_est.snr_db for e in out.entries) == [-9.9, 40]


def test_filter_min_snr_identity():
    m = make_manifest({B: 5, Q: 5}, snrs=[0, 5, 20])
    assert filter_min_snr(m) == m


def test_filter_min_snr_matches_recount():
    snrs = list(rng_for(1, "snr").uniform(-20, 0, 1000))
    m = make_manifest({B: 1000}, snrs=snrs)
    assert len(filter_min_snr(m)) == sum(s > -10 for s in snrs)


# ---------------------------------------------------------------- balance

@pytest.mark.parametrize("counts, expect", [((10, 7, 9), 7), ((5, 5, 5), 5), ((101, 150, 101), 101)])
def test_balance_to_minimum(counts, expect):
    m = make_manifest(dict(zip((B, Q, N), counts)))
    out = balance_classes(m)
    assert set(out.counts.values()) == {expect}
    assert {e.id for e in out.entries} <= {e.id for e in m.entries}
    if len(set(counts)) == 1:
        assert out == m


def test_balance_is_deterministic_and_seeded():
    m = make_manifest({B: 30, Q: 10, N: 10})
    assert balance_classes(m) == balance_classes(m)
    other = balance_classes(make_manifest({B: 30, Q: 10, N: 10}, seed=5))
    assert balance_classes(m).ids != other.ids


def test_balance_empty_class_names_it():
    m = make_manifest({B: 3, Q: 3})
    with pytest.raises(BalanceError, match="Noise"):
        balance_classes(m)


# ---------------------------------------------------------------- split

@pytest.mark.parametrize("n, tr, va", [(101, 91, 10), (10, 9, 1), (2, 1, 1), (1000, 900, 100), (19, 18, 1)])
def test_split_counts(n, tr, va):
    assert split_counts(n, 0.1) == (tr, va)
    m = make_manifest({B: n, Q: n, N: n})
    train, val = split_train_val(m, 0.1, seed=0)
    assert set(train.counts.values()) == {tr}
    assert set(val.counts.values()) == {va}


def test_split_too_small():
    with pytest.raises(SplitError):
        split_train_val(make_manifest({B: 1, Q: 3, N: 3}))


def test_split_determinism_and_seed_dependence():
    m = make_manifest({B: 100, Q: 100, N: 100})
    a = split_train_val(m, 0.1, seed=3)
    assert a == split_train_val(m, 0.1, seed=3)
    b = split_train_val(m, 0.1, seed=4)
    # two independent 10-of-100 draws coincide with probability 1/C(100,10) per class
    assert set(a[1].ids) != set(b[1].ids)


@settings(max_examples=50, deadline=None)
@given(counts=st.lists(st.integers(2, 40), min_size=3, max_size=3), seed=st.integers(0, 2**32),
       frac=st.floats(0.05, 0.5))
def test_split_partition_property(counts, seed, frac):
    m = make_manifest(dict(zip((B, Q, N), counts)))
    train, val = split_train_val(m, frac, seed)
    assert not set(train.ids) & set(val.ids)
    assert set(train.ids) | set(val.ids) == set(m.ids)
    for cls, n in zip((B, Q, N), counts):
        assert val.counts[cls] == max(1, int(np.floor(n * frac + 1e-9)))


def test_split_independent_of_input_order():
    m = make_manifest({B: 20, Q: 20, N: 20})
    shuffled = m.with_entries(reversed(m.entries))
    assert set(split_train_val(m)[1].ids) == set(split_train_val(shuffled)[1].ids)


def test_subsample_per_class():
    m = make_manifest({B: 20, Q: 20, N: 20})
    out = subsample_per_class(m, 7, seed=1)
    assert set(out.counts.values()) == {7}
    with pytest.raises(Exception):
        subsample_per_class(m, 21, seed=1)


# ---------------------------------------------------------------- dataset container

def test_dataset_select_and_concat():
    m = make_manifest({B: 2, Q: 2, N: 2})
    x = np.arange(6 * OBS_LEN).reshape(6, OBS_LEN).astype(np.complex64)
    ds = Dataset(m, x)
    sub = ds.select(m.with_entries(m.entries[::-1][:2]))
    assert np.array_equal(sub.samples, x[[5, 4]])
    assert ds.get(m.entries[3].id).samples[0] == 3 * OBS_LEN
    both = Dataset.concat("both", [ds.select(m.with_entries(m.entries[:3])), ds.select(m.with_entries(m.entries[3:]))])
    assert np.array_equal(both.samples, x)
    with pytest.raises(ValueError):
        Dataset(m.with_entries(m.entries + m.entries[:1]), np.zeros((7, OBS_LEN)))


def test_derive_id_stability():
    assert derive_id("t", 1) == derive_id("t", 1)
    assert derive_id("t", 1) != derive_id("t", 2)
    assert 0 <= derive_id("t", 1) < 2**64
