"""Augmentation of capture observations by redrawing their nuisance parameters.

Each capture parent gets a fixed pool of ``N_STORED`` children. A requested
augmentation factor ``f`` picks ``f`` of a parent's stored children uniformly,
and only children of parents present in the capture subset are eligible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import apply_freq_offset, complex_noise, snr_to_noise_var
from .dataset import (OBS_LEN, Dataset, IqObservation, Manifest, NuisanceParams,
                      ObservationMeta, Source, WaveformClass)
from .density import KdeModel, kde_sample
from .resampler import resample
from .rng import as_generator, derive_id, rng_for

N_STORED = 10
MAX_FACTOR = 10

UNIFORM_SNR_DB = (0.0, 20.0)
UNIFORM_FO = (-0.10, 0.10)
UNIFORM_SRM = (2.0, 8.0)


@dataclass(frozen=True)
class AugmentStrategy:
    kind: str = "uniform_assumed"
    kdes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("uniform_assumed", "kde"):
            raise ValueError(f"unknown augmentation strategy {self.kind!r}")

    @classmethod
    def uniform(cls) -> "AugmentStrategy":
        return cls("uniform_assumed")

    @classmethod
    def from_kdes(cls, kdes: dict[WaveformClass, KdeModel]) -> "AugmentStrategy":
        return cls("kde", dict(kdes))


@dataclass(frozen=True)
class AugmentRecord:
    child: IqObservation
    parent_id: int
    snr_applied: bool
    fo_applied: bool
    srm_applied: bool
    target: NuisanceParams


def draw_uniform(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    size = 1 if n is None else n
    out = np.column_stack([
        rng.uniform(*UNIFORM_SNR_DB, size),
        rng.uniform(*UNIFORM_FO, size),
        rng.uniform(*UNIFORM_SRM, size),
    ])
    return out[0] if n is None else out


def draw_target(strategy: AugmentStrategy, cls: WaveformClass, seed) -> NuisanceParams:
    rng = as_generator(seed)
    if strategy.kind == "uniform_assumed":
        return NuisanceParams(*map(float, draw_uniform(rng)))
    try:
        model = strategy.kdes[WaveformClass(cls)]
    except KeyError:
        raise KeyError(f"no KDE model for class {cls}") from None
    return NuisanceParams(*map(float, kde_sample(model, 1, rng)[0]))


def _wrap(f: float) -> float:
    return (f + 0.5) % 1.0 - 0.5


def augment_observation(parent: IqObservation, target: NuisanceParams, seed=0,
                        child_id: int | None = None, seed_path: tuple = ()) -> AugmentRecord:
    """Move ``parent`` toward ``target``, nulling components that cannot be realized.

    SRM is applied first (resample by ``target.srm / est.srm``; nulled when that
    would leave fewer than 1024 samples), then the FO difference at the new
    rate, then noise to lower the SNR (nulled when the target is above the
    estimate). Nulled components keep the parent's estimate in the metadata.
    """
    est = parent.meta.params_est
    x = parent.samples.astype(np.complex128)
    is_noise = parent.meta.cls is WaveformClass.NOISE

    ratio = target.srm / est.srm
    srm_applied = not is_noise and math.floor(OBS_LEN * ratio + 1e-9) >= OBS_LEN
    fo_now = est.fo_frac
    if srm_applied:
        if ratio != 1.0:
            x = resample(x, ratio)[:OBS_LEN]
        fo_now = _wrap(est.fo_frac / ratio)

    delta = _wrap(target.fo_frac - fo_now)
    x = apply_freq_offset(x, delta) if delta else x

    snr_applied = target.snr_db <= est.snr_db
    if snr_applied:
        total = float(np.mean(np.abs(x) ** 2))
        p_sig = total / (1.0 + snr_to_noise_var(est.snr_db))
        var = p_sig * (snr_to_noise_var(target.snr_db) - snr_to_noise_var(est.snr_db))
        if var > 0:
            x = x + complex_noise(OBS_LEN, var, seed)

    params = NuisanceParams(
        target.snr_db if snr_applied else est.snr_db,
        target.fo_frac,
        target.srm if srm_applied else est.srm,
    )
    if child_id is None:
        child_id = derive_id("child", parent.meta.id, *seed_path)
    meta = ObservationMeta(child_id, parent.meta.cls, Source.AUGMENTED, params,
                           parent_id=parent.meta.id, seed_path=seed_path)
    child = IqObservation(x.astype(np.complex64), meta)
    return AugmentRecord(child, parent.meta.id, snr_applied, True, srm_applied, target)


def augment_parent(parent: IqObservation, strategy: AugmentStrategy, seed: int,
                   n_store: int = N_STORED) -> list[AugmentRecord]:
    """The stored children of one parent; child ``k`` depends only on (seed, parent id, k)."""
    out = []
    for k in range(n_store):
        path = ("augment", strategy.kind, int(seed), str(parent.meta.id), k)
        target = draw_target(strategy, parent.meta.cls, rng_for(*path, "target"))
        out.append(augment_observation(parent, target, rng_for(*path, "noise"),
                                       child_id=derive_id(*path), seed_path=path))
    return out


def precompute_augmentations(capture: Dataset, strategy: AugmentStrategy, seed: int,
                             n_store: int = N_STORED, name: str | None = None) -> Dataset:
    """Stored augmentation pool for every observation of ``capture``."""
    for e in capture.manifest.entries:
        if e.source is not Source.CAPTURE:
            raise ValueError("augmentation parents must be capture observations")
    metas, rows = [], []
    for e in capture.manifest.entries:
        for rec in augment_parent(capture.get(e.id), strategy, seed, n_store):
            metas.append(rec.child.meta)
            rows.append(rec.child.samples)
    samples = np.stack(rows) if rows else np.zeros((0, OBS_LEN), np.complex64)
    label = name or ("Ω_AK" if strategy.kind == "kde" else "Ω_AS")
    return Dataset(Manifest(label, capture.manifest.space, tuple(metas), seed), samples)


def child_index(meta: ObservationMeta) -> int:
    return int(meta.seed_path[-1])


def select_augmented(pool: Manifest, parents: Manifest, factor: int, seed: int,
                     name: str | None = None) -> Manifest:
    """``factor`` stored children per parent in ``parents``, chosen uniformly."""
    if not 1 <= factor <= MAX_FACTOR:
        raise ValueError(f"augmentation factor must be in [1, {MAX_FACTOR}], got {factor}")
    by_parent: dict[int, list[ObservationMeta]] = {}
    for e in pool.entries:
        by_parent.setdefault(e.parent_id, []).append(e)
    chosen = []
    for p in parents.entries:
        kids = sorted(by_parent.get(p.id, []), key=child_index)
        if len(kids) < factor:
            raise ValueError(f"parent {p.id} has {len(kids)} stored children, factor {factor} requested")
        pick = rng_for(seed, "select", str(p.id)).choice(len(kids), factor, replace=False)
        chosen.extend(kids[i] for i in sorted(pick))
    return pool.with_entries(chosen, name)


def build_augmented(capture_train: Dataset, strategy: AugmentStrategy, factor: int, seed: int,
                    pool: Dataset | None = None) -> Dataset:
    """Children of ``capture_train`` at the requested factor (parents not included)."""
    if not 1 <= factor <= MAX_FACTOR:
        raise ValueError(f"augmentation factor must be in [1, {MAX_FACTOR}], got {factor}")
    if pool is None:
        pool = precompute_augmentations(capture_train, strategy, seed)
    sel = select_augmented(pool.manifest, capture_train.manifest, factor, seed)
    return pool.select(sel)
