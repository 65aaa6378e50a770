import numpy as np
import pytest

from rfaug.dataset import (OBS_LEN, Dataset, Manifest, NuisanceParams, ObservationMeta, Source,
                           WaveformClass, get_space)
from rfaug.rng import derive_id, rng_for


def make_meta(i, cls, snr=10.0, fo=0.0, srm=4.0, source=Source.CAPTURE, tag="t"):
    return ObservationMeta(derive_id(tag, i), WaveformClass(cls), source, NuisanceParams(snr, fo, srm))


def make_manifest(counts, space="phi3", seed=0, snrs=None, tag="t"):
    """Manifest with ``counts[cls]`` entries per class; ``snrs`` optionally cycles SNR values."""
    sp = get_space(space)
    entries = []
    i = 0
    for cls, n in counts.items():
        for _ in range(n):
            snr = 10.0 if snrs is None else snrs[i % len(snrs)]
            entries.append(make_meta(i, cls, snr=snr, tag=tag))
            i += 1
    return Manifest("test", sp, tuple(entries), seed)


def random_dataset(n_per_class, space="phi3", seed=0):
    m = make_manifest({c: n_per_class for c in get_space(space).classes}, space, seed)
    rng = rng_for(seed, "samples")
    x = (rng.standard_normal((len(m), OBS_LEN)) + 1j * rng.standard_normal((len(m), OBS_LEN))) / np.sqrt(2)
    return Dataset(m, x.astype(np.complex64))


@pytest.fixture
def phi3():
    return get_space("phi3")


def tone(f, n, phase=0.0):
    return np.exp(1j * (2 * np.pi * f * np.arange(n) + phase))


def peak_freq(x, nfft=None):
    """Frequency (cycles/sample) of the largest FFT bin, with the bin width."""
    nfft = nfft or len(x)
    spec = np.abs(np.fft.fft(x * np.hanning(len(x)), nfft))
    f = np.fft.fftfreq(nfft)
    return f[np.argmax(spec)], 1.0 / nfft
