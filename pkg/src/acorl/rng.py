"""Portable random streams.

Every stochastic component draws from a Philox4x64-10 counter-based
generator keyed directly by a 64-bit seed (``key = (seed, 0)``, counter
starting at zero). Uniform doubles are ``(next_uint64 >> 11) * 2**-53``,
which is what :meth:`numpy.random.Generator.random` produces for Philox.

Gaussians use the Box-Muller transform on consecutive uniform pairs
``(u1, u2)``: ``r = sqrt(-2 ln(1 - u1))`` and the pair yields
``r cos(2 pi u2), r sin(2 pi u2)`` in that order. Shuffles are
Fisher-Yates from the last index down with ``j = floor(u * (i + 1))``.

Per-component seeds come from :func:`derive_seed`: the first eight bytes of
``sha256(f"{seed}/{component}")`` read little-endian.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def derive_seed(seed: int, component: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{component}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def component_rng(seed: int, component: str) -> np.random.Generator:
    return make_rng(derive_seed(seed, component))


def uniform(rng: np.random.Generator, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    return low + (high - low) * rng.random(size)


def normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates via Box-Muller (never the ziggurat)."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape, dtype=np.int64))
    pairs = (n + 1) // 2
    u = rng.random(2 * pairs)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:n].reshape(shape)


def permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.arange(n)
    u = rng.random(max(n - 1, 0))
    for k, i in enumerate(range(n - 1, 0, -1)):
        j = int(u[k] * (i + 1))
        out[i], out[j] = out[j], out[i]
    return out
