"""Reproducible random streams keyed by a master seed and a label path.

Every stochastic consumer derives its own counter-based generator from
(seed, label, label, ...), so results are bitwise identical no matter how
replicates are scheduled or parallelized.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(seed: int, labels: tuple) -> int:
    h = hashlib.blake2s(digest_size=16)
    h.update((seed & _MASK64).to_bytes(8, "little"))
    for lab in labels:
        if isinstance(lab, str):
            raw = lab.encode("utf-8")
            h.update(b"s")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
        else:
            h.update(b"i")
            h.update((int(lab) & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent Philox generator for the stream named (seed, *labels).

    Labels may be ints or strings. The same path always yields the same
    stream; distinct paths yield streams independent for all practical
    purposes (128-bit keyed counter-based generator).
    """
    return np.random.Generator(np.random.Philox(key=_key(seed, labels)))


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit child seed for the path (seed, *labels), for nested derivation."""
    return _key(seed, labels) & ((1 << 63) - 1)
