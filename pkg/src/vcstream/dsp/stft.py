"""Short-time analysis.

The streaming frontend centers frame t on sample t*hop: it reads
[t*hop - win/2, t*hop + win/2), so a frame becomes available win/2 samples
after its center (half-window algorithmic delay). The left edge is
zero-padded; flush() zero-pads the right edge so a signal of L samples
always yields ceil(L / hop) frames. Offline analysis is the same object fed
one big chunk, which keeps the two paths identical by construction.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import get_window


def analysis_window(win_length: int) -> np.ndarray:
    """Periodic Hann window."""
    return get_window("hann", win_length, fftbins=True).astype(np.float64)


class StreamingStft:
    def __init__(self, win_length: int, hop_length: int, n_fft: int):
        if n_fft < win_length:
            raise ValueError("n_fft must be >= win_length")
        if win_length % 2 or hop_length <= 0:
            raise ValueError("win_length must be even and hop_length positive")
        self.win_length = win_length
        self.hop_length = hop_length
        self.n_fft = n_fft
        self.window = analysis_window(win_length)
        self._buf = np.zeros(0, dtype=np.float64)
        self._buf_start = 0  # absolute index of _buf[0]
        self._pushed = 0
        self._next_frame = 0

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def frames_total(self, n_samples: int) -> int:
        return -(-n_samples // self.hop_length)

    def _frame(self, t: int) -> np.ndarray:
        half = self.win_length // 2
        lo = t * self.hop_length - half
        hi = lo + self.win_length
        seg = np.zeros(self.win_length, dtype=np.float64)
        src_lo = max(lo, self._buf_start)
        seg[src_lo - lo:hi - lo] = self._buf[src_lo - self._buf_start:hi - self._buf_start]
        return np.fft.rfft(seg * self.window, n=self.n_fft)

    def _emit_ready(self, limit: "int | None" = None) -> list[np.ndarray]:
        half = self.win_length // 2
        out = []
        avail = self._buf_start + self._buf.size
        while avail >= self._next_frame * self.hop_length + half:
            if limit is not None and self._next_frame >= limit:
                break
            out.append(self._frame(self._next_frame))
            self._next_frame += 1
            keep_from = self._next_frame * self.hop_length - half
            drop = max(0, keep_from - self._buf_start)
            if drop:
                self._buf = self._buf[drop:]
                self._buf_start += drop
        return out

    def push(self, samples: np.ndarray) -> list[np.ndarray]:
        """Feed samples; returns the complex spectra that became computable."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("expected a mono sample vector")
        self._buf = np.concatenate([self._buf, samples])
        self._pushed += samples.size
        return self._emit_ready()

    def flush(self) -> list[np.ndarray]:
        """Zero-pad the right edge and emit the remaining frames."""
        total = self.frames_total(self._pushed)
        if self._next_frame >= total:
            return []
        half = self.win_length // 2
        need = total * self.hop_length + half - self._pushed
        if need > 0:
            self._buf = np.concatenate([self._buf, np.zeros(need)])
        return self._emit_ready(limit=total)


def stft(x: np.ndarray, win_length: int, hop_length: int, n_fft: int) -> np.ndarray:
    """Offline analysis: [ceil(L/hop), n_fft//2 + 1] complex."""
    s = StreamingStft(win_length, hop_length, n_fft)
    frames = s.push(x) + s.flush()
    if not frames:
        return np.zeros((0, s.n_bins), dtype=np.complex128)
    return np.stack(frames)


def frame_signal(x: np.ndarray, win_length: int, hop_length: int) -> np.ndarray:
    """Left-aligned full frames [n, win]; no padding (loss-evaluator framing)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < win_length:
        return np.zeros((0, win_length))
    n = 1 + (x.size - win_length) // hop_length
    idx = np.arange(win_length)[None, :] + hop_length * np.arange(n)[:, None]
    return x[idx]


def magnitude_stft(x: np.ndarray, n_fft: int, hop_length: int) -> np.ndarray:
    """|STFT| with window length = n_fft, Hann, left-aligned frames."""
    frames = frame_signal(x, n_fft, hop_length)
    if frames.shape[0] == 0:
        return np.zeros((0, n_fft // 2 + 1))
    return np.abs(np.fft.rfft(frames * analysis_window(n_fft)[None, :], axis=1))
