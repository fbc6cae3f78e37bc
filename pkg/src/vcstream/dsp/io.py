"""Audio and feature-file IO.

WAV goes through scipy (PCM16 or float32); feature matrices use a small
binary container: magic ``VCFT``, u32 version, u32 frames, u32 dim, then
float32 little-endian row-major data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

FEATURE_MAGIC = b"VCFT"
FEATURE_VERSION = 1


class FeatureFileError(ValueError):
    pass


def read_wav(path) -> tuple[int, np.ndarray]:
    """Returns (sample_rate, float64 mono samples in [-1, 1])."""
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return int(rate), x


def write_wav(path, sample_rate: int, x: np.ndarray, dtype: str = "int16") -> None:
    x = np.asarray(x, dtype=np.float64)
    if dtype == "int16":
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, sample_rate, pcm)
    elif dtype == "float32":
        wavfile.write(path, sample_rate, x.astype(np.float32))
    else:
        raise ValueError("dtype must be int16 or float32")


def pcm16_to_float(raw: bytes) -> np.ndarray:
    """Raw little-endian 16-bit PCM -> float64 samples in [-1, 1)."""
    if len(raw) % 2:
        raise ValueError("odd byte count for 16-bit PCM")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def float_to_pcm16(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype=np.float64)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()


def write_features(path, feats: np.ndarray) -> None:
    feats = np.ascontiguousarray(feats, dtype=np.float32)
    if feats.ndim != 2:
        raise FeatureFileError("feature matrix must be 2-D [frames, dim]")
    header = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION, feats.shape[0], feats.shape[1])
    Path(path).write_bytes(header + feats.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise FeatureFileError("not a feature file (bad magic)")
    version, frames, dim = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"unsupported feature file version {version}")
    want = 16 + 4 * frames * dim
    if len(raw) != want:
        raise FeatureFileError(f"truncated feature file: {len(raw)} bytes, expected {want}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(frames, dim).astype(np.float64)
