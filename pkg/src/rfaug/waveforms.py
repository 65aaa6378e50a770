"""Clean complex-baseband generators for the ten waveform classes.

All generators return unit average power streams and are deterministic in
``(cfg, n_out, seed)``. ``sps`` is the oversampling factor, which doubles as
the sample-rate-mismatch value of the generated signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin
from scipy.special import ndtr

from .dataset import ANALOG_CLASSES, CPM_CLASSES, LINEAR_CLASSES, WaveformClass
from .resampler import resample
from .rng import as_generator

W = WaveformClass

GAUSS_SPAN_SYMBOLS = 4
MSG_FILTER_TAPS = 129


@dataclass(frozen=True)
class ModulatorConfig:
    cls: WaveformClass
    sps: float
    rrc_rolloff: float = 0.35
    rrc_span_symbols: int = 8
    fsk_h: float = 1.0
    gauss_bt: float = 0.35
    fm_dev_frac: float | None = None
    am_depth: float = 0.5
    msg_bw_frac: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "cls", WaveformClass(self.cls))
        if self.sps < 2:
            raise ValueError(f"sps must be >= 2, got {self.sps}")
        if not 0 < self.rrc_rolloff <= 1:
            raise ValueError("rrc_rolloff must be in (0, 1]")
        if self.fsk_h <= 0:
            raise ValueError("fsk_h must be positive")
        if not 0 < self.gauss_bt <= 1:
            raise ValueError("gauss_bt must be in (0, 1]")
        if not 0 <= self.am_depth <= 1:
            raise ValueError("am_depth must be in [0, 1]")
        if self.fm_dev_frac is None:
            object.__setattr__(self, "fm_dev_frac", 0.25 / self.sps)
        if self.msg_bw_frac is None:
            object.__setattr__(self, "msg_bw_frac", 0.5 / self.sps)

    @classmethod
    def default(cls, wclass: WaveformClass, sps: float) -> "ModulatorConfig":
        wclass = WaveformClass(wclass)
        if wclass is W.GMSK:
            return cls(wclass, sps, fsk_h=0.5, gauss_bt=0.3)
        if wclass is W.GBFSK:
            return cls(wclass, sps, fsk_h=1.0, gauss_bt=0.35)
        return cls(wclass, sps)


# ---------------------------------------------------------------- linear

def _gray_levels(bits_per_axis: int) -> np.ndarray:
    """Amplitude for each Gray-coded axis index: ``levels[g]``."""
    m = 1 << bits_per_axis
    levels = np.empty(m)
    for i in range(m):
        g = i ^ (i >> 1)
        levels[g] = 2 * i - (m - 1)
    return levels


def constellation(cls: WaveformClass) -> np.ndarray:
    """Unit-average-power constellation indexed by the Gray-coded symbol value."""
    cls = WaveformClass(cls)
    if cls is W.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    bits = {W.QPSK: 1, W.QAM16: 2, W.QAM64: 3}[cls]
    lv = _gray_levels(bits)
    m = len(lv)
    pts = (lv[:, None] + 1j * lv[None, :]).reshape(-1)  # index = i_bits * m + q_bits
    return pts / math.sqrt(2 * np.mean(lv**2))


def linear_symbols(cls: WaveformClass, n_sym: int, rng: np.random.Generator) -> np.ndarray:
    pts = constellation(cls)
    return pts[rng.integers(0, len(pts), n_sym)]


def rrc_taps(rolloff: float, span: int, sps: int) -> np.ndarray:
    """Root-raised-cosine taps, ``span*sps + 1`` long, scaled so ``sum(h**2) == sps``."""
    t = np.arange(-span * sps / 2, span * sps / 2 + 1) / sps
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 + b * (4 / math.pi - 1)
        elif b > 0 and abs(abs(ti) - 1 / (4 * b)) < 1e-9:
            h[i] = (b / math.sqrt(2)) * ((1 + 2 / math.pi) * math.sin(math.pi / (4 * b))
                                         + (1 - 2 / math.pi) * math.cos(math.pi / (4 * b)))
        else:
            num = math.sin(math.pi * ti * (1 - b)) + 4 * b * ti * math.cos(math.pi * ti * (1 + b))
            den = math.pi * ti * (1 - (4 * b * ti) ** 2)
            h[i] = num / den
    return h * math.sqrt(sps / np.sum(h**2))


def modulate_linear(symbols: np.ndarray, sps: int, rolloff: float = 0.35, span: int = 8) -> np.ndarray:
    """Full-length pulse-shaped stream; symbol ``k`` peaks at index ``k*sps + span*sps//2``."""
    up = np.zeros(len(symbols) * sps, dtype=np.complex128)
    up[::sps] = symbols
    return np.convolve(up, rrc_taps(rolloff, span, sps))


def gen_linear(cfg: ModulatorConfig, n_out: int, seed=0) -> np.ndarray:
    if cfg.cls not in LINEAR_CLASSES:
        raise ValueError(f"{cfg.cls} is not a linear modulation")
    rng = as_generator(seed)
    int_sps = int(math.floor(cfg.sps))
    ratio = cfg.sps / int_sps
    n_need = int(math.ceil((n_out + 2) / ratio)) + 2
    skip = cfg.rrc_span_symbols * int_sps
    n_sym = int(math.ceil((n_need + 2 * skip) / int_sps)) + 1
    x = modulate_linear(linear_symbols(cfg.cls, n_sym, rng), int_sps, cfg.rrc_rolloff, cfg.rrc_span_symbols)
    x = x[skip : skip + n_need]
    if ratio != 1.0:
        x = resample(x, ratio)
    return x[:n_out]


# ---------------------------------------------------------------- CPM

def gaussian_frequency_pulse(t: np.ndarray, sps: float, bt: float) -> np.ndarray:
    """Gaussian-filtered rectangular frequency pulse, centred on 0, integrating to 1/2.

    ``t`` is in samples; one symbol lasts ``sps`` samples.
    """
    k = 2 * math.pi * bt / (sps * math.sqrt(math.log(2)))
    return (ndtr(k * (t + sps / 2)) - ndtr(k * (t - sps / 2))) / (2 * sps)


def cpm_frequency(symbols: np.ndarray, n_out: int, sps: float, h: float, bt: float | None) -> np.ndarray:
    """Instantaneous frequency (cycles/sample) of a binary CPM stream."""
    n = np.arange(n_out, dtype=np.float64)
    if bt is None:
        k = np.floor(n / sps).astype(np.int64)
        return symbols[k] * (h / (2 * sps))
    # symbol k is centred at (k + 0.5)*sps; pad the symbol index so edges see full support
    pad = GAUSS_SPAN_SYMBOLS
    k0 = np.floor(n / sps).astype(np.int64)
    f = np.zeros(n_out)
    for j in range(-pad, pad + 1):
        k = k0 + j
        t = n - (k + 0.5) * sps
        f += symbols[k + pad] * gaussian_frequency_pulse(t, sps, bt)
    return f * h


def gen_cpm(cfg: ModulatorConfig, n_out: int, seed=0) -> np.ndarray:
    if cfg.cls not in CPM_CLASSES:
        raise ValueError(f"{cfg.cls} is not a CPM modulation")
    rng = as_generator(seed)
    n_sym = int(math.ceil(n_out / cfg.sps)) + 2 * GAUSS_SPAN_SYMBOLS + 4
    a = rng.choice([-1.0, 1.0], size=n_sym)
    phase0 = 2 * math.pi * rng.random()
    bt = None if cfg.cls is W.BFSK else cfg.gauss_bt
    f = cpm_frequency(a, n_out, cfg.sps, cfg.fsk_h, bt)
    phase = phase0 + 2 * np.pi * np.concatenate(([0.0], np.cumsum(f[:-1])))
    return np.exp(1j * phase)


# ---------------------------------------------------------------- analog

def _clipped_power() -> float:
    # E[clip(z/3, -1, 1)^2] for z ~ N(0, 1)
    inside = (1 - 2 * ndtr(-3.0)) - 2 * 3 * math.exp(-4.5) / math.sqrt(2 * math.pi)
    return inside / 9 + 2 * ndtr(-3.0)


def analog_message(n_out: int, bw_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Band-limited Gaussian message peak-normalized to [-1, 1] (clipped at 3 sigma)."""
    taps = firwin(MSG_FILTER_TAPS, min(bw_frac, 0.49), fs=1.0)
    w = rng.standard_normal(n_out + MSG_FILTER_TAPS - 1)
    m = np.convolve(w, taps, mode="valid") / math.sqrt(np.sum(taps**2))
    return np.clip(m / 3.0, -1.0, 1.0)


def gen_analog(cfg: ModulatorConfig, n_out: int, seed=0) -> np.ndarray:
    if cfg.cls not in ANALOG_CLASSES:
        raise ValueError(f"{cfg.cls} is not an analog modulation")
    rng = as_generator(seed)
    m = analog_message(n_out, cfg.msg_bw_frac, rng)
    if cfg.cls is W.AM_DSB:
        x = 1.0 + cfg.am_depth * m
        return (x / math.sqrt(1.0 + cfg.am_depth**2 * _clipped_power())).astype(np.complex128)
    phase = 2 * math.pi * rng.random() + 2 * np.pi * cfg.fm_dev_frac * np.cumsum(m)
    return np.exp(1j * phase)


def gen_noise(n_out: int, seed=0) -> np.ndarray:
    rng = as_generator(seed)
    return (rng.standard_normal(n_out) + 1j * rng.standard_normal(n_out)) / math.sqrt(2)


def generate(cfg: ModulatorConfig, n_out: int, seed=0) -> np.ndarray:
    if cfg.cls in LINEAR_CLASSES:
        return gen_linear(cfg, n_out, seed)
    if cfg.cls in CPM_CLASSES:
        return gen_cpm(cfg, n_out, seed)
    if cfg.cls in ANALOG_CLASSES:
        return gen_analog(cfg, n_out, seed)
    return gen_noise(n_out, seed)


def synthesis_rate(cls: WaveformClass, srm: float) -> float:
    """Oversampling used to synthesize a stream that will be resampled to ``srm``."""
    if WaveformClass(cls) in LINEAR_CLASSES:
        return float(max(2, math.floor(srm)))
    return float(max(2.0, srm))


def synthesize_clean(cls: WaveformClass, srm: float, n_out: int, seed=0) -> tuple[np.ndarray, float]:
    """Clean stream at the synthesis rate, long enough to give ``n_out`` samples at ``srm``."""
    gen_sps = synthesis_rate(cls, srm)
    n_gen = int(math.ceil((n_out + 1) * gen_sps / srm)) + 2
    return generate(ModulatorConfig.default(cls, gen_sps), n_gen, seed), gen_sps
