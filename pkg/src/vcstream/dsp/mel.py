"""Mel analysis: triangular filterbank on the HTK mel scale, natural-log
compression with a fixed floor, and a pseudo-inverse for approximate
magnitude recovery."""

from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-9


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int,
                   fmin: float = 0.0, fmax: "float | None" = None) -> np.ndarray:
    """[n_mels, n_fft//2 + 1] peak-one triangles, mel-spaced corner points."""
    if fmax is None:
        fmax = sample_rate / 2.0
    if not 0.0 <= fmin < fmax <= sample_rate / 2.0:
        raise ValueError("need 0 <= fmin < fmax <= nyquist")
    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / n_fft)
    corners = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = corners[m], corners[m + 1], corners[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        fb[m] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return fb


class MelAnalyzer:
    """Magnitude spectra -> log-mel, and the pseudo-inverse direction."""

    def __init__(self, n_mels: int, n_fft: int, sample_rate: int,
                 fmin: float = 0.0, fmax: "float | None" = None,
                 log_floor: float = LOG_FLOOR):
        self.filterbank = mel_filterbank(n_mels, n_fft, sample_rate, fmin, fmax)
        self.log_floor = float(log_floor)
        self._pinv = np.linalg.pinv(self.filterbank)

    @property
    def n_mels(self) -> int:
        return self.filterbank.shape[0]

    def log_mel(self, magnitude: np.ndarray) -> np.ndarray:
        """[..., n_bins] magnitude -> [..., n_mels] natural-log mel."""
        mel = np.asarray(magnitude, dtype=np.float64) @ self.filterbank.T
        return np.log(np.maximum(mel, self.log_floor))

    def magnitude(self, log_mel: np.ndarray) -> np.ndarray:
        """Approximate [..., n_bins] magnitude via the pseudo-inverse."""
        mel = np.exp(np.asarray(log_mel, dtype=np.float64))
        return np.maximum(mel @ self._pinv.T, 0.0)
