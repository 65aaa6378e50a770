"""On-disk dataset directories.

Layout::

    <dir>/manifest.json   dataset-level description (see MANIFEST_SCHEMA)
    <dir>/meta.jsonl      one ObservationMeta JSON object per line, file order
    <dir>/data.iq         interleaved I,Q little-endian float32, observation-major

``data.iq`` row ``k`` belongs to line ``k`` of ``meta.jsonl``. Ids are
rendered as decimal strings because they span the full unsigned 64-bit range.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .dataset import OBS_LEN, Dataset, DatasetError, Manifest, ObservationMeta, get_space

FORMAT_VERSION = 1

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["format_version", "name", "space", "classes", "n_observations",
                 "obs_len", "counts", "entries", "data_sha256", "seed"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "space": {"enum": ["phi3", "phi5", "phi10"]},
        "classes": {"type": "array", "items": {"type": "string"}},
        "n_observations": {"type": "integer", "minimum": 0},
        "obs_len": {"type": "integer", "minimum": 1},
        "counts": {"type": "object", "additionalProperties": {"type": "integer"}},
        "entries": {"type": "object",
                    "additionalProperties": {"type": "array", "items": {"type": "string"}}},
        "data_sha256": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


class FormatError(DatasetError):
    """Base class for unreadable dataset directories."""


class MalformedManifestError(FormatError):
    pass


class TruncatedDataError(FormatError):
    pass


class ChecksumMismatchError(FormatError):
    pass


def _iq_bytes(samples: np.ndarray) -> bytes:
    inter = np.empty((len(samples), OBS_LEN, 2), dtype="<f4")
    inter[..., 0] = samples.real
    inter[..., 1] = samples.imag
    return inter.tobytes()


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    m = dataset.manifest
    raw = _iq_bytes(dataset.samples)
    entries = {c.value: [str(e.id) for e in group] for c, group in m.by_class().items()}
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": m.name,
        "space": m.space.name,
        "classes": [c.value for c in m.space.classes],
        "n_observations": len(m.entries),
        "obs_len": OBS_LEN,
        "counts": {c: len(v) for c, v in entries.items()},
        "entries": entries,
        "data_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": int(m.seed),
    }
    # data first, manifest last: a directory with a manifest is complete
    (path / "data.iq").write_bytes(raw)
    with open(path / "meta.jsonl", "w") as fh:
        for e in m.entries:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def read_manifest_json(path: str | os.PathLike) -> dict:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no dataset directory at {path}")
    try:
        doc = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise MalformedManifestError(f"{path}: missing manifest.json") from None
    except json.JSONDecodeError as exc:
        raise MalformedManifestError(f"{path}: manifest.json is not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise MalformedManifestError(f"{path}: manifest root must be an object")
    missing = [k for k in MANIFEST_SCHEMA["required"] if k not in doc]
    if missing:
        raise MalformedManifestError(f"{path}: manifest lacks {missing}")
    if doc["format_version"] != FORMAT_VERSION:
        raise MalformedManifestError(f"{path}: unsupported format_version {doc['format_version']}")
    if doc["obs_len"] != OBS_LEN:
        raise MalformedManifestError(f"{path}: obs_len {doc['obs_len']} != {OBS_LEN}")
    if not isinstance(doc["n_observations"], int) or doc["n_observations"] < 0:
        raise MalformedManifestError(f"{path}: bad n_observations")
    return doc


def read_dataset(path: str | os.PathLike, verify: bool = True) -> Dataset:
    path = Path(path)
    doc = read_manifest_json(path)
    try:
        space = get_space(doc["space"])
    except ValueError as exc:
        raise MalformedManifestError(f"{path}: {exc}") from None
    n = doc["n_observations"]

    expected = n * OBS_LEN * 2 * 4
    try:
        raw = (path / "data.iq").read_bytes()
    except FileNotFoundError:
        raise TruncatedDataError(f"{path}: missing data.iq") from None
    if len(raw) != expected:
        raise TruncatedDataError(
            f"{path}: data.iq holds {len(raw)} bytes, manifest implies {expected}")
    if verify and hashlib.sha256(raw).hexdigest() != doc["data_sha256"]:
        raise ChecksumMismatchError(f"{path}: data.iq checksum mismatch")

    entries = []
    try:
        with open(path / "meta.jsonl") as fh:
            for line in fh:
                if line.strip():
                    entries.append(ObservationMeta.from_json(json.loads(line)))
    except FileNotFoundError:
        raise MalformedManifestError(f"{path}: missing meta.jsonl") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedManifestError(f"{path}: bad meta.jsonl record ({exc})") from None
    if len(entries) != n:
        raise MalformedManifestError(f"{path}: meta.jsonl has {len(entries)} records, expected {n}")
    listed = {int(i) for ids in doc["entries"].values() for i in ids}
    if listed != {e.id for e in entries}:
        raise MalformedManifestError(f"{path}: manifest entries disagree with meta.jsonl")

    # interleaved little-endian float32 pairs are exactly the "<c8" layout
    samples = np.frombuffer(raw, dtype="<c8").reshape(n, OBS_LEN).astype(np.complex64)
    manifest = Manifest(doc["name"], space, tuple(entries), int(doc["seed"]))
    return Dataset(manifest, samples)
