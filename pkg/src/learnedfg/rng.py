"""Counter-based random streams.

A stream is a Philox-4x64 generator whose 128-bit key is derived from a base
seed and a path of integer (or string) stream ids through ``SeedSequence``.
The same ``(seed, *ids)`` always replays the same draws; distinct ids give
independent streams, so Monte-Carlo trials never share generator state.
"""
from __future__ import annotations

import zlib

import numpy as np


def _id(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream_key(seed: int, *ids) -> int:
    words = np.random.SeedSequence(int(seed), spawn_key=tuple(_id(p) for p in ids)).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def rng_stream(seed: int, *ids) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *ids)))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Box-Muller transform of the stream's uniform doubles (cosine branch only)."""
    n = int(np.prod(size))
    u1 = rng.random(n)
    u2 = rng.random(n)
    return (np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)).reshape(size)


_INVERSION_LIMIT = 30.0


def poisson(rng: np.random.Generator, lam) -> np.ndarray:
    """Poisson draws: sequential-search inversion below rate 30, numpy's sampler above."""
    lam = np.asarray(lam, dtype=float)
    if (lam < 0).any():
        raise ValueError("Poisson rate must be nonnegative")
    flat = lam.reshape(-1)
    out = np.zeros(flat.size, dtype=np.int64)
    u = rng.random(flat.size)
    small = flat < _INVERSION_LIMIT
    if small.any():
        ls = flat[small]
        us = u[small]
        k = np.zeros(ls.size, dtype=np.int64)
        p = np.exp(-ls)
        cdf = p.copy()
        active = us > cdf
        while active.any():
            k[active] += 1
            p[active] *= ls[active] / k[active]
            cdf[active] += p[active]
            # cdf can stall just below 1 in floating point; the tail mass there is < 1e-15
            active &= (us > cdf) & (p > 0)
        out[small] = k
    if (~small).any():
        out[~small] = rng.poisson(flat[~small])
    return out.reshape(lam.shape)
