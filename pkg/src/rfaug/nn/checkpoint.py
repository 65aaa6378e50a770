"""Versioned binary model checkpoints.

Layout (little-endian)::

    magic b"RFCLDNN\\0" | u32 version | u32 descriptor length | descriptor JSON
    then, for each tensor named in the descriptor (in order), its float32 data

The descriptor holds the ``CldnnSpec`` plus the tensor names and shapes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .cldnn import CldnnSpec, ModelParams

MAGIC = b"RFCLDNN\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _tensors(params: ModelParams):
    for name in sorted(params.weights):
        yield "w:" + name, params.weights[name]
    for name in sorted(params.running):
        yield "r:" + name, params.running[name]


def checkpoint_bytes(params: ModelParams) -> bytes:
    tensors = list(_tensors(params))
    desc = {
        "spec": params.spec.to_json(),
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
    }
    raw = json.dumps(desc, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(raw)), raw]
    parts += [np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in tensors]
    return b"".join(parts)


def save_checkpoint(params: ModelParams, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(params))
    return path


def params_from_bytes(buf: bytes) -> ModelParams:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    if len(buf) < 16:
        raise CheckpointError("truncated header")
    version, n = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        desc = json.loads(buf[16 : 16 + n])
        spec = CldnnSpec(**desc["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"bad descriptor: {exc}") from None
    off = 16 + n
    weights, running = {}, {}
    for name, shape in desc["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = off + 4 * count
        if end > len(buf):
            raise CheckpointError(f"truncated data in tensor {name}")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
        off = end
        kind, key = name.split(":", 1)
        (weights if kind == "w" else running)[key] = arr
    if off != len(buf):
        raise CheckpointError("trailing bytes after last tensor")
    expected = spec.shapes()
    if set(weights) != set(expected) or any(weights[k].shape != s for k, s in expected.items()):
        raise CheckpointError("tensor set does not match the architecture descriptor")
    return ModelParams(spec, weights, running)


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    return params_from_bytes(Path(path).read_bytes())
