"""Detector-imperfection impairments and the capture-surrogate propagation path."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .dataset import OBS_LEN, NuisanceParams, WaveformClass
from .resampler import resample
from .rng import as_generator


class GenerationError(ValueError):
    pass


def apply_freq_offset(x: np.ndarray, fo_frac: float, start: int = 0) -> np.ndarray:
    """Mix ``x`` by ``exp(j*2*pi*fo_frac*n)``."""
    if not -0.5 < fo_frac < 0.5:
        raise ValueError(f"fo_frac {fo_frac} outside (-0.5, 0.5)")
    if fo_frac == 0.0:
        return np.asarray(x).astype(np.result_type(x, np.complex64), copy=True)
    n = np.arange(start, start + len(x), dtype=np.float64)
    # phase reduced modulo one cycle before scaling keeps long records accurate
    cyc = np.mod(fo_frac * n, 1.0)
    return x * np.exp(2j * np.pi * cyc)


def snr_to_noise_var(snr_db: float, signal_power: float = 1.0) -> float:
    if snr_db == math.inf:
        return 0.0
    return signal_power / 10.0 ** (snr_db / 10.0)


def complex_noise(n: int, var: float, seed) -> np.ndarray:
    rng = as_generator(seed)
    return math.sqrt(var / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def apply_awgn(x: np.ndarray, target_snr_db: float, signal_power: float = 1.0, seed=0) -> np.ndarray:
    """Add circular complex Gaussian noise of variance ``signal_power / 10^(snr/10)``."""
    if signal_power <= 0:
        raise ValueError("signal_power must be positive")
    var = snr_to_noise_var(target_snr_db, signal_power)
    if var == 0.0:
        return np.array(x, dtype=np.result_type(x, np.complex64), copy=True)
    return x + complex_noise(len(x), var, seed)


def required_input_len(srm: float, gen_sps: float, n_out: int = OBS_LEN) -> int:
    """Clean samples needed at ``gen_sps`` to yield ``n_out`` samples at ``srm``."""
    ratio = srm / gen_sps
    return int(math.ceil((n_out + 1) / ratio)) + 1


def degrade_to_params(x: np.ndarray, p: NuisanceParams, gen_sps: float, seed=0,
                      cls: WaveformClass | None = None, n_out: int = OBS_LEN) -> np.ndarray:
    """Impose ``p`` on a clean stream generated at ``gen_sps`` samples/symbol.

    Order is SRM (resample by ``p.srm / gen_sps``), FO, then AWGN against unit
    signal power, truncated to ``n_out`` samples. The Noise class skips the
    resampling step (it has no symbol rate) and is renormalized to unit power
    after the noise is added.
    """
    rng = as_generator(seed)
    if cls is WaveformClass.NOISE:
        y = np.asarray(x)[:n_out]
    else:
        ratio = p.srm / gen_sps
        y = np.asarray(x) if ratio == 1.0 else resample(x, ratio)
        y = y[:n_out]
    if len(y) < n_out:
        raise GenerationError(f"only {len(y)} samples after resampling, need {n_out}")
    y = apply_freq_offset(y, p.fo_frac)
    y = apply_awgn(y, p.snr_db, 1.0, rng)
    if cls is WaveformClass.NOISE:
        y = y / math.sqrt(1.0 + snr_to_noise_var(p.snr_db))
    return y.astype(np.complex64)


@dataclass(frozen=True)
class PropagationSurrogateConfig:
    n_taps: int = 3
    pdp_decay_db_per_tap: float = 3.0
    iq_gain_imbalance_db: float = 0.5
    iq_phase_imbalance_deg: float = 2.0
    phase_noise_std_rad_per_sample: float = 0.005
    cfo_drift_frac_per_sample: float = 1e-6

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        for name, v in asdict(self).items():
            if name != "n_taps" and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be finite and non-negative")

    @classmethod
    def identity(cls) -> "PropagationSurrogateConfig":
        return cls(1, 0.0, 0.0, 0.0, 0.0, 0.0)

    def tap_powers(self) -> np.ndarray:
        p = 10.0 ** (-self.pdp_decay_db_per_tap * np.arange(self.n_taps) / 10.0)
        return p / p.sum()


def draw_taps(cfg: PropagationSurrogateConfig, rng: np.random.Generator) -> np.ndarray:
    """Line-of-sight first tap (unit modulus, random phase) plus Rayleigh echoes.

    Scaled so that the expected tap powers equal ``cfg.tap_powers()``.
    """
    p = cfg.tap_powers()
    taps = np.empty(cfg.n_taps, dtype=np.complex128)
    taps[0] = np.exp(2j * np.pi * rng.random()) * math.sqrt(p[0])
    if cfg.n_taps > 1:
        g = (rng.standard_normal(cfg.n_taps - 1) + 1j * rng.standard_normal(cfg.n_taps - 1)) / math.sqrt(2)
        taps[1:] = g * np.sqrt(p[1:])
    return taps


def apply_propagation_surrogate(x: np.ndarray, cfg: PropagationSurrogateConfig, seed=0) -> np.ndarray:
    """Multipath FIR, transmitter CFO drift, phase noise, then receiver IQ imbalance."""
    rng = as_generator(seed)
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    taps = draw_taps(cfg, rng)
    y = np.convolve(x, taps)[:n]

    phase = np.zeros(n)
    if cfg.cfo_drift_frac_per_sample > 0:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        idx = np.arange(n, dtype=np.float64)
        phase += sign * np.pi * cfg.cfo_drift_frac_per_sample * idx * idx
    if cfg.phase_noise_std_rad_per_sample > 0:
        steps = rng.standard_normal(n) * cfg.phase_noise_std_rad_per_sample
        steps[0] = 0.0
        phase += np.cumsum(steps)
    if np.any(phase):
        y = y * np.exp(1j * phase)

    if cfg.iq_gain_imbalance_db or cfg.iq_phase_imbalance_deg:
        g = 10.0 ** (cfg.iq_gain_imbalance_db / 20.0)
        phi = math.radians(cfg.iq_phase_imbalance_deg)
        mu = (1.0 + g * np.exp(-1j * phi)) / 2.0
        nu = (1.0 - g * np.exp(1j * phi)) / 2.0
        y = mu * y + nu * np.conj(y)
    return y
