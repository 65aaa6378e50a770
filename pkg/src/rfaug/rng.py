"""Counter-based random streams and stable 64-bit identifiers.

Every random draw in the package is keyed by a tuple of integers/strings
(global seed, purpose tag, observation id, ...). Streams never depend on the
order in which they are requested, so parallel and sequential generation
agree bit for bit.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part) -> bytes:
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("booleans are not valid key parts")
    if isinstance(part, (int, np.integer)):
        return b"i" + struct.pack("<Q", int(part) & _MASK64) + struct.pack("<q", int(part) >> 64)
    if isinstance(part, str):
        raw = part.encode("utf-8")
        return b"s" + struct.pack("<I", len(raw)) + raw
    raise TypeError(f"unsupported key part {part!r}")


def key_digest(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=32)
    for p in parts:
        h.update(_encode(p))
    return h.digest()


def derive_id(*parts) -> int:
    """Stable unsigned 64-bit identifier for a key tuple."""
    return int.from_bytes(key_digest("id", *parts)[:8], "little")


def derive_seed(*parts) -> int:
    return int.from_bytes(key_digest("seed", *parts)[:8], "little")


def rng_for(*parts) -> np.random.Generator:
    """Philox generator keyed by ``parts``."""
    digest = key_digest("rng", *parts)
    key = np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return rng_for(*seed)
    return rng_for(int(seed))
