"""Spectral conversion model.

Two recurrent encoders map log-mel frames to Laplacian posteriors (a main
code carrying spectral identity and an auxiliary code carrying excitation
structure); a Gaussian recurrent decoder maps (speaker one-hot, both codes)
back to log-mel. A small recurrent classifier predicts the speaker from the
codes, and a dense excitation decoder (present only in containers that keep
it) predicts voicing and log-f0 from the auxiliary code.

Frame-rate matvecs run in float32 (the container's native weight precision,
via BLAS sgemv); gate nonlinearities and recurrent state stay float64. One
StackStream implementation is shared by the streaming engine and the loss
evaluators; offline calls are literally the streaming path fed one frame at
a time, so the two can never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as crng
from .config import EngineConfig
from .container import WeightContainer
from .kernels import (
    GruWeights,
    SegConvSpec,
    SegConvStream,
    gaussian_sample,
    laplace_sample,
)

LOG_SCALE_CLIP = 8.0


def one_hot(index: int, n: int) -> np.ndarray:
    if not 0 <= index < n:
        raise ValueError(f"speaker index {index} out of range [0, {n})")
    v = np.zeros(n)
    v[index] = 1.0
    return v


def convert_lf0(lf0, src_stats, trg_stats):
    """Linear log-f0 statistics mapping: match source moments to target's."""
    src_mean, src_std = float(src_stats[0]), float(src_stats[1])
    trg_mean, trg_std = float(trg_stats[0]), float(trg_stats[1])
    if src_std <= 0 or trg_std <= 0:
        raise ValueError("log-f0 std must be positive")
    return (np.asarray(lf0, dtype=np.float64) - src_mean) / src_std * trg_std + trg_mean


@dataclass
class Stack:
    """conv -> GRU -> (optional) linear head."""

    conv: SegConvSpec
    conv_b: np.ndarray
    gru: GruWeights
    head_w: "np.ndarray | None"
    head_b: "np.ndarray | None"

    @property
    def out_dim(self) -> int:
        return self.gru.hidden if self.head_w is None else self.head_w.shape[0]


class StackStream:
    def __init__(self, stack: Stack):
        self.stack = stack
        self._conv = SegConvStream(stack.conv)
        g = stack.gru
        # single-precision stacked kernels for the frame-rate matvecs; the
        # container stores float32, so no information is lost here
        self._wx = np.ascontiguousarray(
            np.concatenate([g.w_r, g.w_z, g.w_n]), dtype=np.float32)
        self._u = np.ascontiguousarray(
            np.concatenate([g.u_r, g.u_z, g.u_n]), dtype=np.float32)
        self._bx = np.concatenate([g.b_r, g.b_z, g.b_n])
        self._head_w = None if stack.head_w is None else \
            np.ascontiguousarray(stack.head_w, dtype=np.float32)
        self.h = np.zeros(stack.gru.hidden)

    def _step(self, c: np.ndarray) -> np.ndarray:
        hid = self.h.size
        x32 = np.asarray(c + self.stack.conv_b, dtype=np.float32)
        pre = (self._wx @ x32).astype(np.float64) + self._bx
        rec = (self._u @ self.h.astype(np.float32)).astype(np.float64)
        r = 1.0 / (1.0 + np.exp(-(pre[:hid] + rec[:hid])))
        z = 1.0 / (1.0 + np.exp(-(pre[hid:2 * hid] + rec[hid:2 * hid])))
        n = np.tanh(pre[2 * hid:] + r * (rec[2 * hid:] + self.stack.gru.b_hn))
        self.h = (1.0 - z) * n + z * self.h
        if self._head_w is None:
            return self.h.copy()
        return ((self._head_w @ self.h.astype(np.float32)).astype(np.float64)
                + self.stack.head_b)

    def push(self, frame: np.ndarray) -> "np.ndarray | None":
        c = self._conv.push(np.asarray(frame, dtype=np.float64))
        return None if c is None else self._step(c)

    def flush(self) -> list:
        return [self._step(c) for c in self._conv.flush()]

    def forward(self, frames: np.ndarray) -> np.ndarray:
        out = [o for o in (self.push(f) for f in frames) if o is not None]
        out.extend(self.flush())
        if not out:
            return np.zeros((0, self.stack.out_dim))
        return np.stack(out)


def load_stack(container: WeightContainer, name: str, edges: tuple, in_dim: int,
               head: bool) -> Stack:
    """edges = (past, future) frames of the segmental convolution."""
    conv_w = container.tensor(f"{name}.conv.w")
    conv_b = container.tensor(f"{name}.conv.b")
    wx = container.tensor(f"{name}.gru.wx")
    bx = container.tensor(f"{name}.gru.bx")
    wh = container.tensor(f"{name}.gru.wh")
    bhn = container.tensor(f"{name}.gru.bhn")
    hidden = wh.shape[1]
    gru = GruWeights(
        w_r=wx[:hidden], w_z=wx[hidden:2 * hidden], w_n=wx[2 * hidden:],
        u_r=wh[:hidden], u_z=wh[hidden:2 * hidden], u_n=wh[2 * hidden:],
        b_r=bx[:hidden], b_z=bx[hidden:2 * hidden], b_n=bx[2 * hidden:],
        b_hn=bhn,
    )
    conv = SegConvSpec(p=edges[0], n=edges[1], in_dim=in_dim,
                       out_dim=conv_w.shape[1], kernel=conv_w)
    return Stack(conv=conv, conv_b=conv_b, gru=gru,
                 head_w=container.tensor(f"{name}.head.w") if head else None,
                 head_b=container.tensor(f"{name}.head.b") if head else None)


class SpectralModel:
    def __init__(self, container: WeightContainer):
        cfg = container.config
        self.config: EngineConfig = cfg
        s, a = cfg.spectral, cfg.audio
        self.enc_main = load_stack(container, "enc_main", (s.enc_past, s.enc_future), a.n_mels, True)
        self.enc_aux = load_stack(container, "enc_aux", (s.enc_past, s.enc_future), a.n_mels, True)
        self.dec = load_stack(container, "dec", (s.dec_past, s.dec_future),
                              s.n_speakers + 2 * s.latent_dim, True)
        self.cls = load_stack(container, "cls", (s.cls_past, s.cls_future), 2 * s.latent_dim, True)
        self.exc = None
        if container.has("exc.gru.wx"):
            self.exc = load_stack(container, "exc", (s.exc_past, s.exc_future),
                                  s.n_speakers + s.latent_dim, True)
        self.lf0_stats = container.tensor("spk.lf0_stats")
        self.latent_dim = s.latent_dim
        self.n_speakers = s.n_speakers
        self.n_mels = a.n_mels

    # -- per-module forwards (offline) --------------------------------------

    def _split_scale(self, out: np.ndarray) -> tuple:
        d = out.shape[1] // 2
        mu = out[:, :d]
        log_b = np.clip(out[:, d:], -LOG_SCALE_CLIP, LOG_SCALE_CLIP)
        return mu, np.exp(log_b)

    def encode(self, mel: np.ndarray, which: str = "main") -> tuple:
        """log-mel [T, n_mels] -> Laplacian posterior (mu, scale), each [T, lat]."""
        stack = self.enc_main if which == "main" else self.enc_aux
        return self._split_scale(StackStream(stack).forward(mel))

    def decode_spectral(self, speaker: int, z_main: np.ndarray, z_aux: np.ndarray) -> tuple:
        """(speaker, codes) -> Gaussian (mu, sigma) over log-mel frames."""
        spk = one_hot(speaker, self.n_speakers)
        x = np.concatenate([np.tile(spk, (z_main.shape[0], 1)), z_main, z_aux], axis=1)
        out = StackStream(self.dec).forward(x)
        mu, sigma = self._split_scale(out)
        return mu, sigma

    def decode_excitation(self, speaker: int, z_aux: np.ndarray) -> np.ndarray:
        """[T, 2]: voicing logit and log-f0 mean."""
        if self.exc is None:
            raise ValueError("this container was saved without the excitation decoder")
        spk = one_hot(speaker, self.n_speakers)
        x = np.concatenate([np.tile(spk, (z_aux.shape[0], 1)), z_aux], axis=1)
        return StackStream(self.exc).forward(x)

    def classify_speaker(self, z_main: np.ndarray, z_aux: np.ndarray) -> np.ndarray:
        """Per-frame speaker logits [T, n_speakers] from the sampled codes."""
        return StackStream(self.cls).forward(np.concatenate([z_main, z_aux], axis=1))

    # -- sampling ------------------------------------------------------------

    def sample_latents(self, mel: np.ndarray, seed: int, cycle: bool = False) -> dict:
        """Posterior draws for both codes; draw (t, d) is addressed by
        t * latent_dim + d, so chunked and whole-sequence evaluation agree."""
        root = crng.root_key(seed)
        sites = ((crng.SITE_CYCLE_LATENT_MAIN, crng.SITE_CYCLE_LATENT_AUX) if cycle
                 else (crng.SITE_LATENT_MAIN, crng.SITE_LATENT_AUX))
        out = {}
        for which, site in zip(("main", "aux"), sites):
            mu, b = self.encode(mel, which)
            key = crng.derive_key(root, site)
            z = laplace_sample(mu.ravel(), b.ravel(), key, 0).reshape(mu.shape)
            out[which] = {"mu": mu, "scale": b, "z": z}
        return out

    # -- end-to-end paths ----------------------------------------------------

    def convert(self, mel: np.ndarray, target: int, seed: int = 0,
                sample: bool = False) -> np.ndarray:
        """Converted log-mel [T, n_mels]; posterior means unless sample=True."""
        if sample:
            lat = self.sample_latents(mel, seed)
            z_main, z_aux = lat["main"]["z"], lat["aux"]["z"]
        else:
            z_main = self.encode(mel, "main")[0]
            z_aux = self.encode(mel, "aux")[0]
        return self.decode_spectral(target, z_main, z_aux)[0]

    def cyclic(self, mel: np.ndarray, source: int, target: int, seed: int = 0) -> dict:
        """One conversion cycle with sampled codes and a sampled intermediate:
        source -> target (sampled mel) -> re-encode -> source again."""
        root = crng.root_key(seed)
        lat1 = self.sample_latents(mel, seed)
        z1m, z1a = lat1["main"]["z"], lat1["aux"]["z"]

        rec_mu, rec_sigma = self.decode_spectral(source, z1m, z1a)
        conv_mu, conv_sigma = self.decode_spectral(target, z1m, z1a)
        key = crng.derive_key(root, crng.SITE_CYCLE_MEL)
        conv_sample = gaussian_sample(conv_mu.ravel(), conv_sigma.ravel(),
                                      key, 0).reshape(conv_mu.shape)

        lat2 = self.sample_latents(conv_sample, seed, cycle=True)
        z2m, z2a = lat2["main"]["z"], lat2["aux"]["z"]
        cyc_mu, cyc_sigma = self.decode_spectral(source, z2m, z2a)

        out = {
            "latents": lat1, "cycle_latents": lat2,
            "rec_mu": rec_mu, "rec_sigma": rec_sigma,
            "conv_mu": conv_mu, "conv_sigma": conv_sigma,
            "conv_sample": conv_sample,
            "cyc_mu": cyc_mu, "cyc_sigma": cyc_sigma,
            "cls_logits": self.classify_speaker(z1m, z1a),
        }
        if self.exc is not None:
            out["exc"] = self.decode_excitation(source, z1a)
        return out


class ConverterStream:
    """Streaming mel-to-mel conversion: push one analysis frame, get the
    converted frame one frame later (encoder lookahead)."""

    def __init__(self, model: SpectralModel, target: int, seed: int = 0,
                 sample: bool = False):
        self.model = model
        self.target = target
        self.sample = sample
        root = crng.root_key(seed)
        self._key_main = crng.derive_key(root, crng.SITE_LATENT_MAIN)
        self._key_aux = crng.derive_key(root, crng.SITE_LATENT_AUX)
        self._enc_main = StackStream(model.enc_main)
        self._enc_aux = StackStream(model.enc_aux)
        self._dec = StackStream(model.dec)
        self._spk = one_hot(target, model.n_speakers)
        self._frame = 0  # latent frame index (for draw addressing)

    def _latent(self, out: np.ndarray, key: int) -> np.ndarray:
        d = out.size // 2
        mu = out[:d]
        if not self.sample:
            return mu
        b = np.exp(np.clip(out[d:], -LOG_SCALE_CLIP, LOG_SCALE_CLIP))
        return laplace_sample(mu, b, key, self._frame * d)

    # the two halves are separate so a caller can account for their time
    # individually; push()/flush() compose them

    def push_encoders(self, mel_frame: np.ndarray) -> "tuple | None":
        em = self._enc_main.push(mel_frame)
        ea = self._enc_aux.push(mel_frame)
        return None if em is None else (em, ea)

    def flush_encoders(self) -> list:
        return list(zip(self._enc_main.flush(), self._enc_aux.flush()))

    def push_decoder(self, em: np.ndarray, ea: np.ndarray) -> "np.ndarray | None":
        z_main = self._latent(em, self._key_main)
        z_aux = self._latent(ea, self._key_aux)
        self._frame += 1
        out = self._dec.push(np.concatenate([self._spk, z_main, z_aux]))
        if out is None:
            return None
        return out[:out.size // 2]

    def flush_decoder(self) -> list:
        return [d[:d.size // 2] for d in self._dec.flush()]

    def push(self, mel_frame: np.ndarray) -> "np.ndarray | None":
        e = self.push_encoders(mel_frame)
        return None if e is None else self.push_decoder(*e)

    def flush(self) -> list:
        outs = [self.push_decoder(em, ea) for em, ea in self.flush_encoders()]
        outs.extend(self.flush_decoder())
        return [o for o in outs if o is not None]
