"""Deterministic, splittable random number streams.

Every source of randomness in the package flows through an ``RngStream``,
a (seed, stream id) pair backed by the counter-based Philox generator.
Two streams constructed with the same pair produce bitwise-identical
sequences on every platform; distinct stream ids are statistically
independent.  Derived streams are obtained by hashing string labels into
new stream ids, so parallel workers (one derived stream per finger, per
layer, ...) stay reproducible regardless of scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _hash_label(stream: int, label: str) -> int:
    digest = hashlib.blake2b(
        label.encode("utf-8"), digest_size=8, key=stream.to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A named, restartable random stream.

    The underlying generator is created lazily and advances as values are
    drawn.  Constructing a new ``RngStream`` with the same (seed, stream)
    restarts the sequence from the beginning.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = (self.stream << 64) | self.seed
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def derive(self, label: str) -> "RngStream":
        """Return an independent stream addressed by ``label``."""
        return RngStream(self.seed, _hash_label(self.stream, label))

    def substream(self, index: int) -> "RngStream":
        """Return an independent stream addressed by an integer index."""
        return self.derive(f"#{int(index)}")

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream={self.stream})"
