"""Named, seed-keyed random streams.

Every stochastic operation in the package draws from an ``RngStream`` so that
a single integer seed fans out into independent, reproducible generators.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def stream_id(name: str | int) -> int:
    """Map a stream name to a stable 32-bit id (ints pass through)."""
    if isinstance(name, int):
        if name < 0:
            raise ValueError("stream ids must be non-negative")
        return name
    return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    def child(self, *names: str | int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(stream_id(n) for n in names))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()
