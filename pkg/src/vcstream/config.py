"""Dataclass configuration for the audio frontend, the spectral conversion
model, and the multiband vocoder, plus the named presets used by the CLI.

Gate order for all recurrent tensors is (reset, update, new); recurrent
densities are likewise (reset, update, new) fractions of kept weights.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 24000
    win_length: int = 660     # 27.5 ms
    hop_length: int = 240     # 10 ms
    n_fft: int = 2048
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0

    def __post_init__(self):
        if self.win_length > self.n_fft:
            raise ValueError("win_length must not exceed n_fft")
        if self.hop_length <= 0 or self.win_length % 2:
            raise ValueError("hop_length must be positive and win_length even")


@dataclass(frozen=True)
class SpectralConfig:
    latent_dim: int = 32
    n_speakers: int = 14
    enc_hidden: int = 512
    enc_conv_out: int = 512
    enc_past: int = 3
    enc_future: int = 1
    dec_hidden: int = 640
    dec_conv_out: int = 640
    dec_past: int = 4
    dec_future: int = 0
    exc_hidden: int = 128
    exc_conv_out: int = 128
    exc_past: int = 4
    exc_future: int = 0
    cls_hidden: int = 32
    cls_conv_out: int = 32
    cls_past: int = 3
    cls_future: int = 1
    rec_density: tuple = (0.685, 0.685, 0.88)
    fine_tuned: bool = True   # drops the excitation decoder, keeps both encoders

    @property
    def exc_out(self) -> int:
        return 2  # voicing logit + log-f0 mean


@dataclass(frozen=True)
class VocoderConfig:
    n_bands: int = 6
    n_bins: int = 256
    lp_order: int = 8
    hidden: int = 1024
    embed_dim: int = 32
    bottleneck: int = 16      # per-band channels after the shared projection
    cond_hidden: int = 256
    cond_conv_out: int = 320
    cond_past: int = 5
    cond_future: int = 1
    rec_density: tuple = (0.095, 0.095, 0.11)
    pqmf_taps: "int | None" = None  # default 16 * n_bands

    @property
    def head_out(self) -> int:
        return self.n_bins + self.lp_order

    def taps(self) -> int:
        return 16 * self.n_bands if self.pqmf_taps is None else self.pqmf_taps


@dataclass(frozen=True)
class EngineConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)

    def __post_init__(self):
        if self.audio.hop_length % self.vocoder.n_bands:
            raise ValueError("hop_length must be divisible by n_bands")

    @property
    def steps_per_frame(self) -> int:
        return self.audio.hop_length // self.vocoder.n_bands

    @property
    def lookahead_frames(self) -> int:
        """Total future frames consumed ahead of the frame being emitted:
        one by the encoder and one by the vocoder conditioning network."""
        return self.spectral.enc_future + self.vocoder.cond_future

    def to_dict(self) -> dict:
        return {"audio": asdict(self.audio), "spectral": asdict(self.spectral),
                "vocoder": asdict(self.vocoder)}

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        spec = dict(d["spectral"])
        spec["rec_density"] = tuple(spec["rec_density"])
        voc = dict(d["vocoder"])
        voc["rec_density"] = tuple(voc["rec_density"])
        return cls(audio=AudioConfig(**d["audio"]),
                   spectral=SpectralConfig(**spec),
                   vocoder=VocoderConfig(**voc))


def toy_config() -> EngineConfig:
    """Small dims for tests and quick experiments; audio geometry unchanged."""
    return EngineConfig(
        spectral=SpectralConfig(
            latent_dim=8, n_speakers=4,
            enc_hidden=40, enc_conv_out=40,
            dec_hidden=48, dec_conv_out=48,
            exc_hidden=24, exc_conv_out=24,
            cls_hidden=16, cls_conv_out=16,
            rec_density=(0.685, 0.685, 0.88),
            fine_tuned=False,
        ),
        vocoder=VocoderConfig(
            n_bands=4, n_bins=64, lp_order=2, hidden=48,
            embed_dim=8, bottleneck=8, cond_hidden=32, cond_conv_out=32,
            rec_density=(0.5, 0.5, 0.6),
        ),
    )


def paper_scale_config() -> EngineConfig:
    """Full-size real-time profile (single-core)."""
    return EngineConfig()


PRESETS = {"toy": toy_config, "paper-scale": paper_scale_config}


def preset(name: str) -> EngineConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}") from None


def with_fine_tuning(cfg: EngineConfig, fine_tuned: bool) -> EngineConfig:
    return replace(cfg, spectral=replace(cfg.spectral, fine_tuned=fine_tuned))
