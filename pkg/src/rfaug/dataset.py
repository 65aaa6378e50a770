"""Observation and dataset types plus the dataset-level operations.

Manifests are immutable; every operation returns a new manifest. Samples live
in a :class:`Dataset`, which pairs a manifest with a dense ``(N, 1024)``
complex64 array aligned to ``manifest.entries``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import rng_for

OBS_LEN = 1024
SLICE_STRIDE = 2048


class DatasetError(Exception):
    """Base class for dataset-level failures."""


class BalanceError(DatasetError):
    pass


class SplitError(DatasetError):
    pass


class WaveformClass(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    BFSK = "BFSK"
    GMSK = "GMSK"
    AM_DSB = "AM-DSB"
    FM_NB = "FM-NB"
    GBFSK = "GBFSK"
    NOISE = "Noise"

    def __str__(self) -> str:
        return self.value


class Source(str, enum.Enum):
    CAPTURE = "capture"
    SYNTHETIC = "synthetic"
    AUGMENTED = "augmented"


LINEAR_CLASSES = frozenset(
    {WaveformClass.BPSK, WaveformClass.QPSK, WaveformClass.QAM16, WaveformClass.QAM64}
)
CPM_CLASSES = frozenset({WaveformClass.BFSK, WaveformClass.GMSK, WaveformClass.GBFSK})
ANALOG_CLASSES = frozenset({WaveformClass.AM_DSB, WaveformClass.FM_NB})


@dataclass(frozen=True)
class WaveformSpace:
    name: str
    classes: tuple[WaveformClass, ...]

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, cls) -> bool:
        return WaveformClass(cls) in self.classes

    def index(self, cls) -> int:
        return self.classes.index(WaveformClass(cls))

    @property
    def label(self) -> str:
        return "Φ" + self.name[3:]


_W = WaveformClass
SPACES: dict[str, WaveformSpace] = {
    "phi3": WaveformSpace("phi3", (_W.BPSK, _W.QPSK, _W.NOISE)),
    "phi5": WaveformSpace("phi5", (_W.BPSK, _W.QPSK, _W.QAM16, _W.QAM64, _W.NOISE)),
    "phi10": WaveformSpace(
        "phi10",
        (_W.BPSK, _W.QPSK, _W.QAM16, _W.QAM64, _W.BFSK, _W.GMSK, _W.AM_DSB, _W.FM_NB, _W.GBFSK, _W.NOISE),
    ),
}


def get_space(name: str | WaveformSpace) -> WaveformSpace:
    if isinstance(name, WaveformSpace):
        return name
    key = str(name).lower().replace("φ", "phi")
    if key.isdigit():
        key = "phi" + key
    try:
        return SPACES[key]
    except KeyError:
        raise ValueError(f"unknown waveform space {name!r}; expected one of {sorted(SPACES)}") from None


@dataclass(frozen=True)
class NuisanceParams:
    """Detector-imperfection triple.

    ``snr_db`` may be ``+inf`` to mean "no noise"; the other two must be finite.
    """

    snr_db: float
    fo_frac: float
    srm: float

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db}")
        if not math.isfinite(self.fo_frac) or not -0.5 < self.fo_frac < 0.5:
            raise ValueError(f"fo_frac must lie in (-0.5, 0.5), got {self.fo_frac}")
        if not math.isfinite(self.srm) or self.srm <= 0:
            raise ValueError(f"srm must be positive and finite, got {self.srm}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.snr_db, self.fo_frac, self.srm)

    def to_json(self) -> dict:
        return {"snr_db": self.snr_db, "fo_frac": self.fo_frac, "srm": self.srm}

    @classmethod
    def from_json(cls, d: Mapping) -> "NuisanceParams":
        return cls(float(d["snr_db"]), float(d["fo_frac"]), float(d["srm"]))


@dataclass(frozen=True)
class ObservationMeta:
    id: int
    cls: WaveformClass
    source: Source
    params_est: NuisanceParams
    parent_id: int | None = None
    seed_path: tuple = ()

    def __post_init__(self):
        if not 0 <= self.id < 2**64:
            raise ValueError("observation ids are unsigned 64-bit integers")
        if (self.parent_id is not None) != (self.source is Source.AUGMENTED):
            raise ValueError("parent_id must be set exactly for augmented observations")

    def to_json(self) -> dict:
        return {
            "id": str(self.id),
            "class": self.cls.value,
            "source": self.source.value,
            "params_est": self.params_est.to_json(),
            "parent_id": None if self.parent_id is None else str(self.parent_id),
            "seed_path": list(self.seed_path),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "ObservationMeta":
        parent = d.get("parent_id")
        return cls(
            id=int(d["id"]),
            cls=WaveformClass(d["class"]),
            source=Source(d["source"]),
            params_est=NuisanceParams.from_json(d["params_est"]),
            parent_id=None if parent is None else int(parent),
            seed_path=tuple(d.get("seed_path", ())),
        )


@dataclass(frozen=True)
class IqObservation:
    samples: np.ndarray
    meta: ObservationMeta

    def __post_init__(self):
        if self.samples.shape != (OBS_LEN,):
            raise ValueError(f"observation must hold {OBS_LEN} samples, got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("observation contains non-finite samples")


@dataclass(frozen=True)
class Manifest:
    name: str
    space: WaveformSpace
    entries: tuple[ObservationMeta, ...] = ()
    seed: int = 0

    def by_class(self) -> dict[WaveformClass, list[ObservationMeta]]:
        out: dict[WaveformClass, list[ObservationMeta]] = {c: [] for c in self.space.classes}
        for e in self.entries:
            out.setdefault(e.cls, []).append(e)
        return out

    @property
    def counts(self) -> dict[WaveformClass, int]:
        return {c: len(v) for c, v in self.by_class().items()}

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def with_entries(self, entries: Iterable[ObservationMeta], name: str | None = None) -> "Manifest":
        return replace(self, entries=tuple(entries), name=self.name if name is None else name)


@dataclass
class Dataset:
    """A manifest plus its samples, row ``i`` belonging to ``manifest.entries[i]``."""

    manifest: Manifest
    samples: np.ndarray
    _index: dict[int, int] = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex64).reshape(-1, OBS_LEN)
        if len(self.samples) != len(self.manifest.entries):
            raise ValueError("sample rows do not match manifest entries")
        self._index = {e.id: i for i, e in enumerate(self.manifest.entries)}
        if len(self._index) != len(self.manifest.entries):
            raise ValueError("duplicate observation ids")

    def __len__(self) -> int:
        return len(self.manifest.entries)

    def __contains__(self, obs_id: int) -> bool:
        return obs_id in self._index

    def get(self, obs_id: int) -> IqObservation:
        i = self._index[obs_id]
        return IqObservation(self.samples[i], self.manifest.entries[i])

    def rows(self, ids: Sequence[int]) -> np.ndarray:
        idx = [self._index[i] for i in ids]
        return self.samples[idx]

    def select(self, manifest: Manifest) -> "Dataset":
        """Restrict to the observations listed in ``manifest`` (in its order)."""
        return Dataset(manifest, self.rows(manifest.ids))

    @classmethod
    def concat(cls, name: str, parts: Sequence["Dataset"], seed: int = 0) -> "Dataset":
        space = parts[0].manifest.space
        entries = [e for p in parts for e in p.manifest.entries]
        samples = np.concatenate([p.samples for p in parts]) if parts else np.zeros((0, OBS_LEN), np.complex64)
        return cls(Manifest(name, space, tuple(entries), seed), samples)


def slice_record(record: np.ndarray, window: int = OBS_LEN, stride: int = SLICE_STRIDE) -> np.ndarray:
    """Cut non-overlapping windows out of a record.

    Windows start at multiples of ``stride``; a trailing partial window is
    dropped. Returns a ``(k, window)`` array, ``k = floor((N-window)/stride)+1``.
    """
    if window < 1 or stride < window:
        raise ValueError("need window >= 1 and stride >= window")
    record = np.asarray(record)
    n = len(record)
    if n < window:
        return np.zeros((0, window), dtype=record.dtype)
    k = (n - window) // stride + 1
    starts = np.arange(k) * stride
    return np.stack([record[s : s + window] for s in starts])


def is_regular(samples: np.ndarray, rms_factor: float = 10.0) -> bool:
    """Reject non-finite observations and those with spikes above ``rms_factor`` x RMS."""
    if not np.all(np.isfinite(samples)):
        return False
    mag = np.abs(samples)
    rms = math.sqrt(float(np.mean(mag.astype(np.float64) ** 2)))
    if rms == 0.0:
        return True
    return bool(np.max(mag) <= rms_factor * rms)


def filter_min_snr(manifest: Manifest, threshold_db: float = -10.0) -> Manifest:
    return manifest.with_entries(e for e in manifest.entries if e.params_est.snr_db > threshold_db)


def _shuffled(entries: list[ObservationMeta], *key) -> list[ObservationMeta]:
    # order by id first so the result does not depend on input order
    ordered = sorted(entries, key=lambda e: e.id)
    perm = rng_for(*key).permutation(len(ordered))
    return [ordered[i] for i in perm]


def balance_classes(manifest: Manifest) -> Manifest:
    """Downsample every class to the smallest class count."""
    groups = manifest.by_class()
    for cls in manifest.space.classes:
        if not groups.get(cls):
            raise BalanceError(f"class {cls.value} has no observations")
    n_min = min(len(groups[c]) for c in manifest.space.classes)
    keep: set[int] = set()
    for cls in manifest.space.classes:
        members = groups[cls]
        if len(members) > n_min:
            members = _shuffled(members, manifest.seed, "balance", cls.value)[:n_min]
        keep.update(e.id for e in members)
    return manifest.with_entries(e for e in manifest.entries if e.id in keep)


def split_counts(n: int, frac: float) -> tuple[int, int]:
    """(kept, held-out) counts with the held-out side floored but at least 1."""
    held = max(1, int(math.floor(n * frac + 1e-9)))
    return n - held, held


def split_train_val(manifest: Manifest, val_frac: float = 0.1, seed: int = 0,
                    names: tuple[str, str] | None = None) -> tuple[Manifest, Manifest]:
    """Per-class deterministic split; validation gets ``max(1, floor(n*val_frac))``."""
    train_ids: set[int] = set()
    val_ids: set[int] = set()
    for cls, members in manifest.by_class().items():
        if not members:
            continue
        if len(members) < 2:
            raise SplitError(f"class {cls.value} has {len(members)} observation(s); need at least 2")
        _, n_val = split_counts(len(members), val_frac)
        shuffled = _shuffled(members, seed, "split", cls.value)
        val_ids.update(e.id for e in shuffled[:n_val])
        train_ids.update(e.id for e in shuffled[n_val:])
    tr_name, va_name = names or (manifest.name + ":train", manifest.name + ":val")
    train = manifest.with_entries((e for e in manifest.entries if e.id in train_ids), tr_name)
    val = manifest.with_entries((e for e in manifest.entries if e.id in val_ids), va_name)
    return train, val


def subsample_per_class(manifest: Manifest, qty: int, seed: int, name: str | None = None) -> Manifest:
    """Pick ``qty`` observations per class uniformly without replacement."""
    keep: set[int] = set()
    for cls, members in manifest.by_class().items():
        if len(members) < qty:
            raise DatasetError(f"class {cls.value} has {len(members)} observations, {qty} requested")
        keep.update(e.id for e in _shuffled(members, seed, "subsample", cls.value)[:qty])
    return manifest.with_entries((e for e in manifest.entries if e.id in keep), name)
