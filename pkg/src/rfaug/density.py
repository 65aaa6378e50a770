"""Per-class joint Gaussian KDE over (SNR dB, FO fraction, SRM)."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import WaveformClass
from .rng import as_generator

MIN_POINTS = 8
MAX_REDRAWS = 100


class KdeFitError(ValueError):
    pass


class KdeSampleError(RuntimeError):
    pass


def scott_factor(n: int, d: int = 3) -> float:
    return n ** (-1.0 / (d + 4))


@dataclass(frozen=True)
class KdeModel:
    cls: WaveformClass
    points: np.ndarray
    bandwidth_factor: float
    data_cov: np.ndarray

    @property
    def kernel_cov(self) -> np.ndarray:
        return self.bandwidth_factor**2 * self.data_cov

    @property
    def n(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {
            "class": self.cls.value,
            "bandwidth_factor": self.bandwidth_factor,
            "points": self.points.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "KdeModel":
        pts = np.asarray(d["points"], dtype=np.float64)
        return cls(WaveformClass(d["class"]), pts, float(d["bandwidth_factor"]), np.cov(pts, rowvar=False))


def kde_fit(samples: np.ndarray, cls: WaveformClass) -> KdeModel:
    pts = np.array(samples, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise KdeFitError(f"expected an N x 3 array, got shape {pts.shape}")
    n = len(pts)
    if n < MIN_POINTS:
        raise KdeFitError(f"need at least {MIN_POINTS} points, got {n}")
    if not np.all(np.isfinite(pts)):
        raise KdeFitError("non-finite parameter values")
    cov = np.cov(pts, rowvar=False)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise KdeFitError("parameter covariance is singular")
    return KdeModel(WaveformClass(cls), pts, scott_factor(n, 3), cov)


def kde_pdf(model: KdeModel, point) -> np.ndarray | float:
    """Mixture density at ``point`` (a 3-vector or an M x 3 array)."""
    q = np.atleast_2d(np.asarray(point, dtype=np.float64))
    cov = model.kernel_cov
    chol = np.linalg.cholesky(cov)
    norm = 1.0 / ((2 * math.pi) ** 1.5 * np.prod(np.diag(chol)))
    out = np.empty(len(q))
    for i, x in enumerate(q):
        z = np.linalg.solve(chol, (x - model.points).T)
        out[i] = norm * np.mean(np.exp(-0.5 * np.sum(z * z, axis=0)))
    return out if np.ndim(point) == 2 else float(out[0])


def _valid(draws: np.ndarray) -> np.ndarray:
    return (draws[:, 2] > 1.0) & (np.abs(draws[:, 1]) < 0.5)


def kde_sample_raw(model: KdeModel, n: int, seed=0) -> np.ndarray:
    """Draws from the mixture without the validity redraw."""
    rng = as_generator(seed)
    idx = rng.integers(0, model.n, n)
    if model.bandwidth_factor == 0.0:
        return model.points[idx].copy()
    chol = np.linalg.cholesky(model.kernel_cov)
    return model.points[idx] + rng.standard_normal((n, 3)) @ chol.T


def kde_sample(model: KdeModel, n: int, seed=0) -> np.ndarray:
    """``n`` draws; draws with srm <= 1 or |fo| >= 0.5 are redrawn (up to 100 rounds)."""
    rng = as_generator(seed)
    out = kde_sample_raw(model, n, rng)
    bad = ~_valid(out)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > MAX_REDRAWS:
            raise KdeSampleError(f"{int(bad.sum())} draws still invalid after {MAX_REDRAWS} redraws")
        out[bad] = kde_sample_raw(model, int(bad.sum()), rng)
        bad = ~_valid(out)
    return out


def save_kdes(models: dict[WaveformClass, KdeModel], path: str | os.PathLike) -> None:
    doc = {"models": [m.to_json() for m in models.values()]}
    Path(path).write_text(json.dumps(doc))


def load_kdes(path: str | os.PathLike) -> dict[WaveformClass, KdeModel]:
    doc = json.loads(Path(path).read_text())
    models = [KdeModel.from_json(d) for d in doc["models"]]
    return {m.cls: m for m in models}
