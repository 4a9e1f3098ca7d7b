"""Named, stateless random substreams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


class Streams:
    """Every draw site asks for ``gen(name, ..., t)``.

    Generators are rebuilt from (seed, key...) on each call, so a draw depends
    only on its key: adding an agent or cloning the world never shifts other
    streams.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)

    def gen(self, *key) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32] + [_key(k) for k in key]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def __repr__(self):
        return f"Streams(seed={self.seed})"
