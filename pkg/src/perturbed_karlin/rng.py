"""Seeded random streams.

Every replication owns one :class:`RngStream`.  Streams are keyed by
``(seed, stream_id)`` through :class:`numpy.random.SeedSequence` spawn keys,
so distinct ids give independent PCG64 streams and the same key always
replays the same draws.
"""

from __future__ import annotations

import numpy as np

_MAX_U64 = 2**64 - 1
_TWO53 = float(2**53)


class RngStream:
    """Single-owner random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0, *, _key: tuple[int, ...] | None = None):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed <= _MAX_U64 and 0 <= stream_id <= _MAX_U64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = seed
        self.stream_id = stream_id
        self.key = _key if _key is not None else (stream_id,)
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=self.key)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"

    def child(self, *tags: int) -> "RngStream":
        """Independent sub-stream; does not advance this stream."""
        return RngStream(self.seed, self.stream_id, _key=self.key + tuple(int(t) for t in tags))

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1); never 0 or 1."""
        k = self.gen.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO53

    def exponential(self, size=None):
        return self.gen.standard_exponential(size)

    def poisson(self, lam, size=None):
        return self.gen.poisson(lam, size)


def as_stream(rng) -> RngStream:
    """Accept an RngStream or an integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
