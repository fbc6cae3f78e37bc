"""Forward-only evaluation of every training-objective term.

Nothing here trains anything: these functions score a model (or a pair of
signals) under the objectives the weights were optimized for, in float64,
so regressions in the inference path show up as loss drift.

Conventions: negative log-likelihoods and divergences are summed over vector
dimensions and averaged over frames (nats); waveform cross-entropy is
averaged over band-steps and bands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as crng
from .dsp import mulaw
from .dsp.pqmf import PqmfBank
from .dsp.stft import magnitude_stft
from .kernels import laplace_eps

LOG2PI = float(np.log(2.0 * np.pi))

STFT_RESOLUTIONS = ((512, 80), (1024, 160), (2048, 240))


def gaussian_nll(x: np.ndarray, mu: np.ndarray, sigma) -> float:
    """Diagonal Gaussian NLL, dims summed, frames averaged."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), x.shape)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    per = 0.5 * LOG2PI + np.log(sigma) + 0.5 * ((x - mu) / sigma) ** 2
    return float(per.sum(axis=-1).mean())


def kl_laplace(mu1, b1, mu2=0.0, b2=1.0) -> float:
    """KL(Laplace(mu1, b1) || Laplace(mu2, b2)), dims summed, frames averaged."""
    mu1 = np.atleast_2d(np.asarray(mu1, dtype=np.float64))
    b1 = np.broadcast_to(np.asarray(b1, dtype=np.float64), mu1.shape)
    mu2 = np.broadcast_to(np.asarray(mu2, dtype=np.float64), mu1.shape)
    b2 = np.broadcast_to(np.asarray(b2, dtype=np.float64), mu1.shape)
    if np.any(b1 <= 0) or np.any(b2 <= 0):
        raise ValueError("scales must be positive")
    gap = np.abs(mu1 - mu2)
    per = np.log(b2 / b1) + gap / b2 + (b1 / b2) * np.exp(-gap / b1) - 1.0
    return float(per.sum(axis=-1).mean())


def kl_laplace_mc(mu1, b1, mu2=0.0, b2=1.0, n: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of the same KL (validation oracle)."""
    key = crng.derive_key(crng.root_key(seed), crng.tag_string("kl-mc"))
    eps = laplace_eps(crng.uniforms(key, 0, n))
    z = float(mu1) - float(b1) * eps  # reparameterized draw from q
    logq = -np.abs(z - float(mu1)) / float(b1) - np.log(2.0 * float(b1))
    logp = -np.abs(z - float(mu2)) / float(b2) - np.log(2.0 * float(b2))
    return float(np.mean(logq - logp))


def categorical_ce(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy in nats; logits [..., C], integer targets [...]."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, targets[..., None], axis=-1)[..., 0]
    return float((logz - picked).mean())


def waveform_ce(logits: np.ndarray, bins: np.ndarray) -> float:
    """Teacher-forced bin cross-entropy, averaged over steps and bands."""
    if logits.shape[:-1] != bins.shape:
        raise ValueError("logits and bins disagree on [steps, bands]")
    return categorical_ce(logits, bins)


def excitation_nll(exc_out: np.ndarray, uv: np.ndarray, lf0: np.ndarray,
                   sigma: float = 1.0) -> float:
    """Voicing BCE plus Gaussian log-f0 NLL on voiced frames.

    exc_out [T, 2] = (voicing logit, log-f0 mean); uv in {0, 1}.
    """
    exc_out = np.asarray(exc_out, dtype=np.float64)
    uv = np.asarray(uv, dtype=np.float64)
    logit = exc_out[:, 0]
    # stable BCE with logits
    bce = np.maximum(logit, 0) - logit * uv + np.log1p(np.exp(-np.abs(logit)))
    total = float(bce.mean())
    voiced = uv > 0.5
    if np.any(voiced):
        d = (np.asarray(lf0, dtype=np.float64)[voiced] - exc_out[voiced, 1]) / sigma
        total += float(np.mean(0.5 * LOG2PI + np.log(sigma) + 0.5 * d * d))
    return total


def stft_loss(x: np.ndarray, y: np.ndarray,
              resolutions=STFT_RESOLUTIONS, floor: float = 1e-7) -> float:
    """Multi-resolution spectral loss: convergence + log-magnitude L1,
    averaged over resolutions. Identical inputs score exactly zero."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = min(x.size, y.size)
    total = 0.0
    for n_fft, hop in resolutions:
        mx = magnitude_stft(x[:n], n_fft, hop)
        my = magnitude_stft(y[:n], n_fft, hop)
        if mx.size == 0:
            continue
        denom = np.linalg.norm(mx)
        sc = np.linalg.norm(mx - my) / max(denom, floor)
        mag = float(np.mean(np.abs(np.log(np.maximum(mx, floor))
                                   - np.log(np.maximum(my, floor)))))
        total += sc + mag
    return total / len(resolutions)


def layerwise_loss(acts_a: dict, acts_b: dict) -> float:
    """Mean absolute gap between matching named activations."""
    if sorted(acts_a) != sorted(acts_b):
        raise ValueError("activation dictionaries must have the same layers")
    gaps = []
    for name in sorted(acts_a):
        a, b = np.asarray(acts_a[name]), np.asarray(acts_b[name])
        if a.shape != b.shape:
            raise ValueError(f"layer {name!r} shape mismatch {a.shape} vs {b.shape}")
        gaps.append(np.mean(np.abs(a - b)))
    return float(np.mean(gaps))


def fullres_magnitude_loss(log_mel: np.ndarray, magnitude: np.ndarray,
                           analyzer, floor: float = 1e-7) -> float:
    """Log-L1 between the pseudo-inverse magnitude implied by a mel sequence
    and a reference full-resolution magnitude."""
    rec = analyzer.magnitude(log_mel)
    if rec.shape != magnitude.shape:
        raise ValueError("frame/bin mismatch between mel and magnitude")
    return float(np.mean(np.abs(np.log(np.maximum(rec, floor))
                                - np.log(np.maximum(magnitude, floor)))))


# ---------------------------------------------------------------------------
# objective inventory over one utterance


@dataclass
class ElboReport:
    rec_nll: float
    kl_main: float
    kl_aux: float
    cyc_rec_nll: float
    cyc_kl_main: float
    cyc_kl_aux: float
    speaker_ce: float
    extras: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        base = (self.rec_nll + self.kl_main + self.kl_aux + self.cyc_rec_nll
                + self.cyc_kl_main + self.cyc_kl_aux + self.speaker_ce)
        return base + sum(self.extras.values())

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("rec_nll", "kl_main", "kl_aux", "cyc_rec_nll",
              "cyc_kl_main", "cyc_kl_aux", "speaker_ce")}
        d.update(self.extras)
        d["total"] = self.total
        return d


def elbo_report(model, mel: np.ndarray, source: int, target: int,
                seed: int = 0, uv=None, lf0=None, exc_sigma: float = 1.0) -> ElboReport:
    """Score one utterance under the cyclic variational objective."""
    out = model.cyclic(mel, source, target, seed=seed)
    lat1, lat2 = out["latents"], out["cycle_latents"]
    extras = {}
    if "exc" in out and uv is not None and lf0 is not None:
        extras["exc_nll"] = excitation_nll(out["exc"], uv, lf0, sigma=exc_sigma)
    T = mel.shape[0]
    return ElboReport(
        rec_nll=gaussian_nll(mel, out["rec_mu"], out["rec_sigma"]),
        kl_main=kl_laplace(lat1["main"]["mu"], lat1["main"]["scale"]),
        kl_aux=kl_laplace(lat1["aux"]["mu"], lat1["aux"]["scale"]),
        cyc_rec_nll=gaussian_nll(mel, out["cyc_mu"], out["cyc_sigma"]),
        cyc_kl_main=kl_laplace(lat2["main"]["mu"], lat2["main"]["scale"]),
        cyc_kl_aux=kl_laplace(lat2["aux"]["mu"], lat2["aux"]["scale"]),
        speaker_ce=categorical_ce(out["cls_logits"], np.full(T, source, dtype=np.int64)),
        extras=extras,
    )


def vocoder_report(voc, mel: np.ndarray, x: np.ndarray, steps_per_frame: int,
                   key: int = 0) -> dict:
    """Waveform-side objective terms for a (mel, waveform) pair:
    teacher-forced bin cross-entropy and the multi-resolution spectral loss
    of the expected reconstruction."""
    bank = PqmfBank(voc.n_bands, taps=voc.config.vocoder.taps())
    bands = bank.analyze(x)
    cond = voc.condition(mel)
    steps = min(bands.shape[0], cond.shape[0] * steps_per_frame)
    bins = mulaw.encode(np.clip(bands[:steps], -1.0, 1.0), voc.n_bins)
    logits = voc.band_logits(cond, bins, steps_per_frame)
    exp_bands = voc.expected_bands(cond, bins, steps_per_frame)
    xhat = bank.synthesize(exp_bands)
    # analysis + synthesis each contribute taps/2 of delay
    d = bank.taps
    n = max(0, min(x.size, xhat.size - d))
    return {
        "waveform_ce": waveform_ce(logits, bins),
        "stft": stft_loss(x[:n], xhat[d:d + n]),
    }
