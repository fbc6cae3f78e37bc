"""Streaming conversion engine: frontend -> encoders -> decoder ->
conditioning + band-rate sampler -> filterbank synthesis, with per-stage
wall-clock accounting.

Both offline and chunked operation drive the same per-frame loop (offline is
one big push), so the two produce byte-identical audio. Stage times are
bucketed into frontend / encoders / decoder / vocoder; whatever wall time is
not attributed to a bucket shows up as "other", so the stage real-time
factors sum exactly to the total.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from . import rng as crng
from .config import AudioConfig, EngineConfig
from .container import WeightContainer
from .dsp import mulaw
from .dsp.mel import MelAnalyzer
from .dsp.pqmf import PqmfBank, PqmfSynthesizer
from .dsp.stft import StreamingStft
from .spectral import ConverterStream, SpectralModel
from .vocoder import Vocoder, VocoderStream

STAGES = ("frontend", "encoders", "decoder", "vocoder")


def delay_budget(win_ms: float, hop_ms: float, lookup_frames: int) -> float:
    """Algorithmic delay in milliseconds of a causal frame pipeline that
    waits for `lookup_frames` future frames in total.

    Frame t needs input through t*hop + win/2 plus one hop per lookup
    frame; its audio is finished at (t+1)*hop, so the frame's own hop
    absorbs one of them: win/2 + (lookup - 1)*hop.
    """
    return win_ms / 2.0 + (lookup_frames - 1) * hop_ms


def config_delay_ms(cfg: EngineConfig) -> float:
    a = cfg.audio
    scale = 1000.0 / a.sample_rate
    return delay_budget(a.win_length * scale, a.hop_length * scale,
                        cfg.lookahead_frames)


@dataclass
class LatencyReport:
    frames: int
    samples_in: int
    samples_out: int
    audio_seconds: float
    wall_seconds: float
    rtf: float
    stage_seconds: dict
    stage_rtf: dict
    algorithmic_delay_ms: float
    max_frame_seconds: float = 0.0
    overrun_frames: int = 0
    chunk_walls: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "frames": self.frames,
            "samples_in": self.samples_in,
            "samples_out": self.samples_out,
            "audio_seconds": self.audio_seconds,
            "wall_seconds": self.wall_seconds,
            "rtf": self.rtf,
            "stage_seconds": dict(self.stage_seconds),
            "stage_rtf": dict(self.stage_rtf),
            "algorithmic_delay_ms": self.algorithmic_delay_ms,
            "max_frame_seconds": self.max_frame_seconds,
            "overrun_frames": self.overrun_frames,
        }


class ConversionSession:
    """One source-utterance-to-target-speaker conversion stream."""

    def __init__(self, container: WeightContainer, target: int, seed: int = 0,
                 sample_latents: bool = False):
        cfg = container.config
        self.config: EngineConfig = cfg
        a, v = cfg.audio, cfg.vocoder
        self.model = SpectralModel(container)
        self.vocoder = Vocoder(container)
        self.stft = StreamingStft(a.win_length, a.hop_length, a.n_fft)
        self.mel = MelAnalyzer(a.n_mels, a.n_fft, a.sample_rate, a.fmin, a.fmax)
        self.converter = ConverterStream(self.model, target, seed=seed,
                                         sample=sample_latents)
        self.cond = self.vocoder.cond_stream()
        key = crng.derive_key(crng.root_key(seed), crng.SITE_VOCODER)
        self.voc_stream = VocoderStream(self.vocoder, key, cfg.steps_per_frame)
        self.pqmf = PqmfSynthesizer(PqmfBank(v.n_bands, taps=v.taps()))
        _fast.warmup()
        self.stage_seconds = {s: 0.0 for s in STAGES}
        self.wall_seconds = 0.0
        self.max_frame_seconds = 0.0
        self.samples_in = 0
        self.samples_out = 0
        self.frames = 0
        self._flushed = False

    # -- pipeline pieces -----------------------------------------------------

    def _vocode(self, conv_mel: np.ndarray) -> np.ndarray:
        c = self.cond.push(conv_mel)
        if c is None:
            return np.zeros(0)
        return self._vocode_cond(c)

    def _vocode_cond(self, c: np.ndarray) -> np.ndarray:
        bins = self.voc_stream.push_cond(c)
        bands = mulaw.decode(bins, self.vocoder.n_bins)
        return self.pqmf.push(bands)

    def _handle_mel(self, mel_frame: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        enc = self.converter.push_encoders(mel_frame)
        t1 = time.perf_counter()
        self.stage_seconds["encoders"] += t1 - t0
        conv = None if enc is None else self.converter.push_decoder(*enc)
        t2 = time.perf_counter()
        self.stage_seconds["decoder"] += t2 - t1
        audio = self._vocode(conv) if conv is not None else np.zeros(0)
        t3 = time.perf_counter()
        self.stage_seconds["vocoder"] += t3 - t2
        self.max_frame_seconds = max(self.max_frame_seconds, t3 - t0)
        return audio

    # -- public API ------------------------------------------------------------

    def push(self, samples: np.ndarray) -> np.ndarray:
        """Feed input audio; returns whatever converted audio became ready."""
        if self._flushed:
            raise RuntimeError("session already flushed")
        wall0 = time.perf_counter()
        samples = np.asarray(samples, dtype=np.float64)
        self.samples_in += samples.size
        t0 = time.perf_counter()
        spectra = self.stft.push(samples)
        mels = [self.mel.log_mel(np.abs(s)) for s in spectra]
        self.stage_seconds["frontend"] += time.perf_counter() - t0
        out = [self._handle_mel(m) for m in mels]
        self.frames += len(mels)
        audio = np.concatenate(out) if out else np.zeros(0)
        self.samples_out += audio.size
        self.wall_seconds += time.perf_counter() - wall0
        return audio

    def flush(self) -> np.ndarray:
        """Drain every stage; total output is frames * hop samples."""
        if self._flushed:
            return np.zeros(0)
        self._flushed = True
        wall0 = time.perf_counter()
        out = []
        t0 = time.perf_counter()
        spectra = self.stft.flush()
        mels = [self.mel.log_mel(np.abs(s)) for s in spectra]
        self.stage_seconds["frontend"] += time.perf_counter() - t0
        out.extend(self._handle_mel(m) for m in mels)
        self.frames += len(mels)

        t0 = time.perf_counter()
        pairs = self.converter.flush_encoders()
        self.stage_seconds["encoders"] += time.perf_counter() - t0
        for em, ea in pairs:
            t0 = time.perf_counter()
            conv = self.converter.push_decoder(em, ea)
            self.stage_seconds["decoder"] += time.perf_counter() - t0
            if conv is not None:
                t0 = time.perf_counter()
                out.append(self._vocode(conv))
                self.stage_seconds["vocoder"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        tail = self.converter.flush_decoder()
        self.stage_seconds["decoder"] += time.perf_counter() - t0
        for conv in tail:
            t0 = time.perf_counter()
            out.append(self._vocode(conv))
            self.stage_seconds["vocoder"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        for c in self.cond.flush():
            out.append(self._vocode_cond(c))
        out.append(self.pqmf.flush())
        self.stage_seconds["vocoder"] += time.perf_counter() - t0

        audio = np.concatenate(out) if out else np.zeros(0)
        self.samples_out += audio.size
        self.wall_seconds += time.perf_counter() - wall0
        return audio

    def convert(self, samples: np.ndarray) -> np.ndarray:
        return np.concatenate([self.push(samples), self.flush()])

    def report(self, chunk_walls=None, chunk_seconds=None) -> LatencyReport:
        audio_seconds = self.samples_out / self.config.audio.sample_rate
        denom = max(audio_seconds, 1e-12)
        stage_rtf = {s: self.stage_seconds[s] / denom for s in STAGES}
        stage_rtf["other"] = (self.wall_seconds - sum(self.stage_seconds.values())) / denom
        overruns = 0
        walls = list(chunk_walls or [])
        if walls and chunk_seconds:
            overruns = int(sum(w > chunk_seconds for w in walls))
        return LatencyReport(
            frames=self.frames,
            samples_in=self.samples_in,
            samples_out=self.samples_out,
            audio_seconds=audio_seconds,
            wall_seconds=self.wall_seconds,
            rtf=self.wall_seconds / denom,
            stage_seconds=dict(self.stage_seconds),
            stage_rtf=stage_rtf,
            algorithmic_delay_ms=config_delay_ms(self.config),
            max_frame_seconds=self.max_frame_seconds,
            overrun_frames=overruns,
            chunk_walls=walls,
        )


def stream_convert(container: WeightContainer, samples: np.ndarray, target: int,
                   chunk: "int | None" = None, seed: int = 0,
                   sample_latents: bool = False) -> tuple:
    """Run a conversion in hop-sized (or `chunk`-sized) pushes.

    Returns (audio, LatencyReport); per-chunk wall times feed the overrun
    count against the real-time deadline of one chunk of audio.
    """
    session = ConversionSession(container, target, seed=seed,
                                sample_latents=sample_latents)
    chunk = session.config.audio.hop_length if chunk is None else int(chunk)
    samples = np.asarray(samples, dtype=np.float64)
    out = []
    walls = []
    for i in range(0, max(samples.size, 1), chunk):
        t0 = time.perf_counter()
        out.append(session.push(samples[i:i + chunk]))
        walls.append(time.perf_counter() - t0)
    t0 = time.perf_counter()
    out.append(session.flush())
    walls.append(time.perf_counter() - t0)
    audio = np.concatenate(out)
    report = session.report(chunk_walls=walls,
                            chunk_seconds=chunk / session.config.audio.sample_rate)
    return audio, report


def bench_input(n_samples: int, seed: int = 0) -> np.ndarray:
    """Deterministic wideband test signal in [-0.5, 0.5]."""
    key = crng.derive_key(crng.root_key(seed), crng.SITE_BENCH_INPUT)
    return crng.uniforms(key, 0, n_samples) - 0.5


def bench(container: WeightContainer, seconds: float = 10.0, target: int = 0,
          seed: int = 0, warmup_seconds: float = 0.5) -> LatencyReport:
    """Measure RTF on synthetic input, after a short untimed warmup pass."""
    sr = container.config.audio.sample_rate
    if warmup_seconds > 0:
        warm = ConversionSession(container, target, seed=seed)
        warm.convert(bench_input(int(warmup_seconds * sr), seed=seed + 1))
    x = bench_input(int(seconds * sr), seed=seed)
    _, report = stream_convert(container, x, target, seed=seed)
    return report
