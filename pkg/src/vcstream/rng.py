"""Counter-based splittable random streams.

Every sampling site in the pipeline owns an independent stream derived from
one run seed; a draw is addressed by (site key, counter), so results do not
depend on evaluation order or stream chunking. The generator is the
splitmix64 finalizer applied to ``key + (counter+1) * GOLDEN``: stateless,
O(1) random access, and reproducible bit-for-bit across the pure-Python,
vectorized-numpy, and jitted implementations.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stable site tags (part of the determinism contract; do not renumber).
SITE_LATENT_MAIN = 1
SITE_LATENT_AUX = 2
SITE_MEL_SAMPLE = 3
SITE_VOCODER = 4
SITE_CYCLE_LATENT_MAIN = 5
SITE_CYCLE_LATENT_AUX = 6
SITE_CYCLE_MEL = 7
SITE_INIT_WEIGHTS = 8
SITE_BENCH_INPUT = 9


def mix64(z: int) -> int:
    """splitmix64 finalizer on Python ints (mod 2**64)."""
    z &= MASK64
    z = (z ^ (z >> 30)) * _MIX1 & MASK64
    z = (z ^ (z >> 27)) * _MIX2 & MASK64
    return z ^ (z >> 31)


def root_key(seed: int) -> int:
    return mix64((seed & MASK64) ^ 0x5851F42D4C957F2D)


def derive_key(key: int, tag: int) -> int:
    """Child stream key for a sampling site (or sub-stream)."""
    return mix64((key ^ mix64(tag * GOLDEN & MASK64)) & MASK64)


def tag_string(s: str) -> int:
    """Fold a string into a 64-bit tag (for per-tensor key derivation)."""
    t = 0
    for ch in s.encode():
        t = mix64((t * GOLDEN ^ ch) & MASK64)
    return t


def raw64(key: int, counter: int) -> int:
    return mix64((key + (counter + 1) * GOLDEN) & MASK64)


def uniform(key: int, counter: int) -> float:
    """One double in the open interval (0, 1)."""
    return ((raw64(key, counter) >> 11) + 0.5) * 2.0**-53


def uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized draws for counters start .. start+count-1, in (0, 1)."""
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(key) + ctr * np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
