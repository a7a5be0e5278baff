"""Named, splittable random streams.

Every stochastic call site takes an explicit ``numpy.random.Generator``.
Streams are derived from a root seed plus a tuple of names, using the
counter-based Philox bit generator, so the same (seed, names) pair always
replays the same numbers regardless of what other streams were consumed.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Return the generator for ``seed`` split along ``names``."""
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def split(rng: np.random.Generator, *names: str | int) -> np.random.Generator:
    """Derive a child stream from an existing generator without consuming it."""
    seq = rng.bit_generator.seed_seq
    key = tuple(seq.spawn_key) + tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(seq.entropy, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed_or_rng: int | np.random.Generator | None, *names: str | int) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return split(seed_or_rng, *names) if names else seed_or_rng
    return stream(0 if seed_or_rng is None else seed_or_rng, *names)
