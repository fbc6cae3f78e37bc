"""Objective quality metrics: mel-cepstral distortion, log global-variance
distance, and f0/voicing agreement (with a small autocorrelation pitch
tracker so the metrics can run straight from waveforms)."""

from __future__ import annotations

import numpy as np
from scipy.fft import dct

MCD_CONST = 10.0 / np.log(10.0)


def mel_cepstra(log_mel: np.ndarray, n_coef: "int | None" = None) -> np.ndarray:
    """DCT-II (orthonormal) of log-mel frames -> cepstra [T, n_coef]."""
    log_mel = np.atleast_2d(np.asarray(log_mel, dtype=np.float64))
    mc = dct(log_mel, type=2, norm="ortho", axis=1)
    return mc if n_coef is None else mc[:, :n_coef]


def mcd(mc_a: np.ndarray, mc_b: np.ndarray) -> float:
    """Mel-cepstral distortion in dB, averaged over frames.

    Pass cepstra without the energy coefficient; all given dimensions are
    scored: (10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2).
    """
    mc_a = np.atleast_2d(np.asarray(mc_a, dtype=np.float64))
    mc_b = np.atleast_2d(np.asarray(mc_b, dtype=np.float64))
    if mc_a.shape != mc_b.shape:
        raise ValueError(f"cepstra shapes differ: {mc_a.shape} vs {mc_b.shape}")
    per_frame = MCD_CONST * np.sqrt(2.0 * np.sum((mc_a - mc_b) ** 2, axis=1))
    return float(per_frame.mean())


def mcd_from_log_mel(log_mel_a: np.ndarray, log_mel_b: np.ndarray,
                     n_coef: int = 25) -> float:
    """MCD over cepstral coefficients 1..n_coef-1 (energy term dropped)."""
    a = mel_cepstra(log_mel_a, n_coef)[:, 1:]
    b = mel_cepstra(log_mel_b, n_coef)[:, 1:]
    return mcd(a, b)


def lgd(log_mel_a: np.ndarray, log_mel_b: np.ndarray) -> float:
    """Log global-variance distance: mean |log10 gv_a - log10 gv_b| over mel
    dims, where gv is the per-dimension variance across frames."""
    a = np.atleast_2d(np.asarray(log_mel_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(log_mel_b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two frames to estimate variance")
    gv_a = np.maximum(a.var(axis=0), 1e-12)
    gv_b = np.maximum(b.var(axis=0), 1e-12)
    return float(np.mean(np.abs(np.log10(gv_a) - np.log10(gv_b))))


# ---------------------------------------------------------------------------
# pitch


def f0_track(x: np.ndarray, sample_rate: int, fmin: float = 70.0,
             fmax: float = 400.0, frame_ms: float = 25.0, hop_ms: float = 10.0,
             voicing_threshold: float = 0.3) -> tuple:
    """Normalized-autocorrelation pitch track.

    Returns (f0 [T], voiced [T] bool); f0 is 0 where unvoiced.
    """
    x = np.asarray(x, dtype=np.float64)
    frame = int(round(sample_rate * frame_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    lag_lo = int(np.floor(sample_rate / fmax))
    lag_hi = int(np.ceil(sample_rate / fmin))
    if frame <= lag_hi:
        raise ValueError("frame too short for the requested fmin")
    n = max(0, 1 + (x.size - frame) // hop)
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    for t in range(n):
        seg = x[t * hop:t * hop + frame]
        seg = seg - seg.mean()
        e0 = np.dot(seg, seg)
        if e0 < 1e-10:
            continue
        # normalized autocorrelation over the candidate lag range
        best_r, best_lag = 0.0, 0
        for lag in range(lag_lo, lag_hi + 1):
            a = seg[:-lag]
            b = seg[lag:]
            denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
            if denom < 1e-12:
                continue
            r = np.dot(a, b) / denom
            if r > best_r:
                best_r, best_lag = r, lag
        if best_r >= voicing_threshold and best_lag:
            voiced[t] = True
            f0[t] = sample_rate / best_lag
    return f0, voiced


def f0_metrics(f0_a: np.ndarray, voiced_a: np.ndarray,
               f0_b: np.ndarray, voiced_b: np.ndarray) -> dict:
    """RMSE of log-f0 (in cents) over frames both tracks call voiced, and
    the voicing decision disagreement rate in percent."""
    n = min(len(f0_a), len(f0_b))
    va = np.asarray(voiced_a[:n], dtype=bool)
    vb = np.asarray(voiced_b[:n], dtype=bool)
    both = va & vb
    if np.any(both):
        cents = 1200.0 * np.log2(np.asarray(f0_a[:n])[both] / np.asarray(f0_b[:n])[both])
        rmse = float(np.sqrt(np.mean(cents ** 2)))
    else:
        rmse = float("nan")
    return {"f0_rmse_cents": rmse, "uv_error_percent": float(np.mean(va != vb) * 100.0)}
