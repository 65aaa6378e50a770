"""Arbitrary-ratio resampling with a Kaiser-windowed sinc kernel.

The kernel is evaluated at the exact fractional offset of every output
sample, i.e. a polyphase bank with a continuum of phases. The window is
zero-phase, so no delay compensation is needed: output sample ``m`` sits at
input time ``m / ratio``.
"""

from __future__ import annotations

import math

import numpy as np

KAISER_BETA = 8.0
TAPS_PER_PHASE = 32
MIN_RATIO = 1.0 / 32
MAX_RATIO = 32.0

_CHUNK = 1 << 15


def kaiser_sinc(u: np.ndarray, cutoff: float, half_width: float, beta: float = KAISER_BETA) -> np.ndarray:
    """Lowpass kernel ``2*cutoff*sinc(2*cutoff*u)`` under a Kaiser window of half-width ``half_width``.

    ``cutoff`` is in cycles per input sample (0.5 = Nyquist).
    """
    v = np.clip(u / half_width, -1.0, 1.0)
    w = np.i0(beta * np.sqrt(1.0 - v * v)) / np.i0(beta)
    w = np.where(np.abs(u) < half_width, w, 0.0)
    return 2.0 * cutoff * np.sinc(2.0 * cutoff * u) * w


def kernel_geometry(ratio: float, taps: int = TAPS_PER_PHASE) -> tuple[float, float]:
    """(cutoff, half_width) in input-sample units for a given ratio."""
    scale = min(1.0, ratio)
    return 0.5 * scale, 0.5 * taps / scale


def resample(x: np.ndarray, ratio: float, taps: int = TAPS_PER_PHASE, beta: float = KAISER_BETA) -> np.ndarray:
    """Resample ``x`` so that its rate is multiplied by ``ratio``.

    Output length is ``floor(len(x) * ratio)``. A tone at ``f`` cycles/sample
    comes out at ``f / ratio``. For ``ratio < 1`` the kernel is stretched so
    the cutoff tracks the output Nyquist frequency.
    """
    ratio = float(ratio)
    if not MIN_RATIO <= ratio <= MAX_RATIO:
        raise ValueError(f"resampling ratio {ratio} outside [{MIN_RATIO}, {MAX_RATIO}]")
    x = np.asarray(x)
    n_in = len(x)
    n_out = int(math.floor(n_in * ratio + 1e-9))
    if ratio == 1.0:
        return x.copy()
    cutoff, half = kernel_geometry(ratio, taps)
    reach = int(math.ceil(half))
    offs = np.arange(-reach + 1, reach + 1)
    out_dtype = np.result_type(x.dtype, np.float64)
    y = np.empty(n_out, dtype=out_dtype)
    for start in range(0, n_out, _CHUNK):
        m = np.arange(start, min(n_out, start + _CHUNK))
        t = m / ratio
        base = np.floor(t).astype(np.int64)
        k = base[:, None] + offs[None, :]
        h = kaiser_sinc(t[:, None] - k, cutoff, half, beta)
        valid = (k >= 0) & (k < n_in)
        xk = np.where(valid, x[np.clip(k, 0, max(n_in - 1, 0))], 0.0)
        y[start : start + len(m)] = np.sum(h * xk, axis=1)
    return y
