"""Dataset builders: synthetic sets and the capture surrogate.

Every observation draws from its own keyed random streams, so any subset of
a dataset can be regenerated independently and in any order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import UNIFORM_FO, UNIFORM_SNR_DB, UNIFORM_SRM
from .channel import (GenerationError, PropagationSurrogateConfig, apply_awgn, apply_freq_offset,
                      apply_propagation_surrogate, degrade_to_params, snr_to_noise_var)
from .dataset import (OBS_LEN, SLICE_STRIDE, Dataset, Manifest, NuisanceParams, ObservationMeta,
                      Source, WaveformClass, WaveformSpace, balance_classes, filter_min_snr,
                      is_regular, slice_record, split_train_val, subsample_per_class)
from .density import KdeModel, kde_fit, kde_sample
from .resampler import resample
from .rng import derive_id, rng_for
from .waveforms import synthesize_clean

W = WaveformClass


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------- synthetic


def uniform_params(rng: np.random.Generator) -> NuisanceParams:
    return NuisanceParams(float(rng.uniform(*UNIFORM_SNR_DB)), float(rng.uniform(*UNIFORM_FO)),
                          float(rng.uniform(*UNIFORM_SRM)))


def synth_observation(cls: WaveformClass, p: NuisanceParams, key: tuple) -> np.ndarray:
    """One impaired 1024-sample observation with parameters ``p``."""
    clean, gen_sps = synthesize_clean(cls, p.srm, OBS_LEN, rng_for(*key, "clean"))
    return degrade_to_params(clean, p, gen_sps, rng_for(*key, "noise"), cls=cls)


def synth_dataset(space: WaveformSpace, qty_per_class: int, seed: int, name: str = "Ω_SS",
                  kdes: dict[WaveformClass, KdeModel] | None = None,
                  failures: list | None = None) -> Dataset:
    """Balanced synthetic set; parameters uniform unless per-class ``kdes`` are given.

    If ``failures`` is a list, observations that fail to generate are skipped
    and ``(seed_path, message)`` pairs are appended to it; otherwise the
    first failure is raised.
    """
    if qty_per_class < 0:
        raise ValueError("qty_per_class must be non-negative")
    if kdes is not None:
        missing = [c.value for c in space.classes if c not in kdes]
        if missing:
            raise KeyError(f"no KDE model for classes {missing}")
    metas, rows = [], []
    for cls in space.classes:
        for i in range(qty_per_class):
            key = ("synth", name, int(seed), cls.value, i)
            try:
                prng = rng_for(*key, "params")
                if kdes is None:
                    p = uniform_params(prng)
                else:
                    p = NuisanceParams(*map(float, kde_sample(kdes[cls], 1, prng)[0]))
                obs = synth_observation(cls, p, key)
            except (GenerationError, ValueError, ArithmeticError) as exc:
                if failures is None:
                    raise
                failures.append((key, f"{type(exc).__name__}: {exc}"))
                continue
            rows.append(obs)
            metas.append(ObservationMeta(derive_id(*key), cls, Source.SYNTHETIC, p, seed_path=key))
    samples = np.stack(rows) if rows else np.zeros((0, OBS_LEN), np.complex64)
    return Dataset(Manifest(name, space, tuple(metas), int(seed)), samples)


# ---------------------------------------------------------------- capture surrogate


@dataclass(frozen=True)
class CaptureParamDistribution:
    """Detector-imperfection statistics of the emulated collection.

    ``kind="capture_like"``: SNR is median + Laplace spread, clipped to
    ``snr_clip_db``; FO is Laplace around 0, clipped to ``fo_clip``; SRM is
    uniform on ``srm_low`` with probability ``1 - p_srm_high`` and on
    ``srm_high`` otherwise. ``kind="uniform"`` reuses the assumed uniform
    ranges of the synthetic sets.
    """

    kind: str = "capture_like"
    snr_median_db: float = 10.0
    snr_scale_db: float = 8.0
    snr_clip_db: tuple[float, float] = (-15.0, 80.0)
    fo_scale: float = 0.005
    fo_clip: float = 0.20
    srm_low: tuple[float, float] = (2.0, 8.0)
    srm_high: tuple[float, float] = (8.0, 32.0)
    p_srm_high: float = 1.0 / 3.0

    def __post_init__(self):
        if self.kind not in ("capture_like", "uniform"):
            raise ValueError(f"unknown parameter distribution {self.kind!r}")
        if not 0 < self.fo_clip < 0.5:
            raise ValueError("fo_clip must lie in (0, 0.5)")
        if self.srm_low[0] < 1 or self.srm_high[0] < 1:
            raise ValueError("srm ranges must start at or above 1")

    def draw(self, rng: np.random.Generator) -> NuisanceParams:
        if self.kind == "uniform":
            return uniform_params(rng)
        snr = float(np.clip(self.snr_median_db + rng.laplace(0.0, self.snr_scale_db), *self.snr_clip_db))
        fo = float(np.clip(rng.laplace(0.0, self.fo_scale), -self.fo_clip, self.fo_clip))
        lo, hi = self.srm_high if rng.random() < self.p_srm_high else self.srm_low
        return NuisanceParams(snr, fo, float(rng.uniform(lo, hi)))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CaptureParamDistribution":
        d = dict(d)
        for k in ("snr_clip_db", "srm_low", "srm_high"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class CaptureSurrogateConfig:
    params: CaptureParamDistribution = field(default_factory=CaptureParamDistribution)
    propagation: PropagationSurrogateConfig | None = field(default_factory=PropagationSurrogateConfig)
    slices_per_record: int = 4
    min_snr_db: float = -10.0
    test_frac: float = 0.1

    def __post_init__(self):
        if self.slices_per_record < 1:
            raise ValueError("slices_per_record must be >= 1")

    @property
    def record_len(self) -> int:
        return (self.slices_per_record - 1) * SLICE_STRIDE + OBS_LEN

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "propagation": None if self.propagation is None else asdict(self.propagation),
            "slices_per_record": self.slices_per_record,
            "min_snr_db": self.min_snr_db,
            "test_frac": self.test_frac,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CaptureSurrogateConfig":
        prop = d.get("propagation", {})
        return cls(
            CaptureParamDistribution.from_json(d.get("params", {})),
            None if prop is None else PropagationSurrogateConfig(**prop),
            int(d.get("slices_per_record", 4)),
            float(d.get("min_snr_db", -10.0)),
            float(d.get("test_frac", 0.1)),
        )


def capture_record(cls: WaveformClass, p: NuisanceParams, cfg: CaptureSurrogateConfig, key: tuple) -> np.ndarray:
    """One emulated recording: clean -> rate change -> propagation -> FO -> noise."""
    n = cfg.record_len
    clean, gen_sps = synthesize_clean(cls, p.srm, n, rng_for(*key, "clean"))
    if cls is W.NOISE:
        x = np.asarray(clean)[:n]
    else:
        ratio = p.srm / gen_sps
        x = (clean if ratio == 1.0 else resample(clean, ratio))[:n]
        if cfg.propagation is not None:
            x = apply_propagation_surrogate(x, cfg.propagation, rng_for(*key, "channel"))
    if len(x) < n:
        raise GenerationError(f"record has {len(x)} samples, need {n}")
    x = apply_freq_offset(x, p.fo_frac)
    x = apply_awgn(x, p.snr_db, 1.0, rng_for(*key, "noise"))
    if cls is W.NOISE:
        x = x / math.sqrt(1.0 + snr_to_noise_var(p.snr_db))
    return x


def capture_pool(space: WaveformSpace, min_per_class: int, cfg: CaptureSurrogateConfig, seed: int,
                 max_records: int | None = None, failures: list | None = None) -> Dataset:
    """Filtered capture-like observations, at least ``min_per_class`` per class.

    Records are generated per class in index order until enough slices
    survive the SNR and regularity filters.
    """
    k = cfg.slices_per_record
    limit = max_records if max_records is not None else 20 * (min_per_class // k + 1) + 100
    metas, rows = [], []
    for cls in space.classes:
        kept, r = 0, 0
        while kept < min_per_class:
            if r >= limit:
                raise PipelineError(f"class {cls.value}: only {kept} usable slices after {limit} records")
            key = ("capture", int(seed), cls.value, r)
            p = cfg.params.draw(rng_for(*key, "params"))
            r += 1
            if not p.snr_db > cfg.min_snr_db:
                continue
            try:
                record = capture_record(cls, p, cfg, key)
            except (GenerationError, ValueError, ArithmeticError) as exc:
                if failures is None:
                    raise
                failures.append((key, f"{type(exc).__name__}: {exc}"))
                continue
            for s, obs in enumerate(slice_record(record)):
                if not is_regular(obs):
                    continue
                okey = key + (s,)
                metas.append(ObservationMeta(derive_id(*okey), cls, Source.CAPTURE, p, seed_path=okey))
                rows.append(obs.astype(np.complex64))
                kept += 1
    samples = np.stack(rows) if rows else np.zeros((0, OBS_LEN), np.complex64)
    return Dataset(Manifest("capture", space, tuple(metas), int(seed)), samples)


def capture_surrogate(space: WaveformSpace, qty_per_class: int, cfg: CaptureSurrogateConfig,
                      seed: int, failures: list | None = None) -> tuple[Dataset, Dataset]:
    """(Ω_C, Ω_TC): ``qty_per_class`` filtered, balanced observations split 90/10."""
    pool = capture_pool(space, qty_per_class, cfg, seed, failures=failures)
    m = filter_min_snr(pool.manifest, cfg.min_snr_db)
    m = balance_classes(m)
    m = subsample_per_class(m, qty_per_class, seed)
    train, test = split_train_val(m, cfg.test_frac, seed, names=("Ω_C", "Ω_TC"))
    return pool.select(train), pool.select(test)


# ---------------------------------------------------------------- KDE


def params_matrix(manifest: Manifest, cls: WaveformClass) -> np.ndarray:
    return np.array([e.params_est.as_tuple() for e in manifest.entries if e.cls is cls], dtype=np.float64)


def fit_class_kdes(manifest: Manifest) -> dict[WaveformClass, KdeModel]:
    """One KDE per class over the recorded (SNR, FO, SRM) estimates."""
    return {cls: kde_fit(params_matrix(manifest, cls), cls) for cls in manifest.space.classes}
