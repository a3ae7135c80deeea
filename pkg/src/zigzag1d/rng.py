"""Reproducible per-replicate random streams."""
from __future__ import annotations

import numpy as np

__all__ = ["RngStream"]

_U64 = 1 << 64


class RngStream:
    """PCG64 stream keyed by ``(seed, stream_id)``.

    Streams with the same key replay the same uniforms; distinct
    ``stream_id`` values are spawned children of one ``SeedSequence`` and
    hence independent.  The object is stateful: each draw advances it.
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0):
        for label, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= int(value) < _U64:
                raise ValueError(f"{label} must be an unsigned 64-bit integer, got {value}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def uniform(self) -> float:
        return self.generator.random()

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
