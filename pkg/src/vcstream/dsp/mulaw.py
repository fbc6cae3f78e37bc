"""Zero-centered mid-tread mu-law companding.

The companded axis in [-1, 1] is quantized on the grid c_b = (2b - n_bins) /
n_bins, b in [0, n_bins), so the midpoint bin b = n_bins/2 decodes to exactly
zero (the autoregressive sampler idles there) and encode(decode(b)) == b for
every bin. mu = n_bins - 1.
"""

from __future__ import annotations

import numpy as np


def _check_bins(n_bins: int) -> None:
    if n_bins < 2 or n_bins % 2:
        raise ValueError("n_bins must be even and >= 2")


def compand(x, n_bins: int):
    """sign(x) * ln(1 + mu|x|) / ln(1 + mu), mapped onto [-1, 1]."""
    _check_bins(n_bins)
    x = np.asarray(x, dtype=np.float64)
    mu = float(n_bins - 1)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def expand(f, n_bins: int):
    """Inverse of compand."""
    _check_bins(n_bins)
    f = np.asarray(f, dtype=np.float64)
    mu = float(n_bins - 1)
    return np.sign(f) * np.expm1(np.abs(f) * np.log1p(mu)) / mu


def encode(x, n_bins: int):
    """Waveform in [-1, 1] -> integer bins in [0, n_bins)."""
    f = compand(x, n_bins)
    b = n_bins // 2 + np.round(f * (n_bins // 2))
    return np.clip(b, 0, n_bins - 1).astype(np.int64)


def center(bins, n_bins: int):
    """Companded-domain centers of the given bins."""
    _check_bins(n_bins)
    bins = np.asarray(bins, dtype=np.int64)
    if np.any(bins < 0) or np.any(bins >= n_bins):
        raise ValueError("bin index out of range")
    return (2.0 * bins - n_bins) / n_bins


def decode(bins, n_bins: int):
    """Integer bins -> waveform values (expanded bin centers)."""
    return expand(center(bins, n_bins), n_bins)
