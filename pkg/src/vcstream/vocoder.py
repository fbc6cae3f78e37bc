"""Multiband autoregressive vocoder.

Per band-step the model embeds the previous bin of every band, runs one
sparse GRU step conditioned on the frame's conditioning vector, projects
through a shared bottleneck into per-band heads, and emits base logits plus
linear-prediction coefficients. The final logits are the base logits shifted
by a coefficient-weighted sum of basis rows selected by the bins sampled at
the previous `lp_order` steps (prediction in logit space, one [bins x bins]
basis table per band shared across lags). Sampling is inverse-CDF on the
softmax with counter-addressed uniforms: draw = step * n_bands + band.

The float64 path here is the reference used by loss evaluators and tests;
real-time synthesis runs the fused float32 kernel (see _fast.py) on the same
weights and the same draw addressing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fast
from . import rng as crng
from .config import EngineConfig
from .container import WeightContainer
from .dsp import mulaw
from .kernels import GruWeights, categorical_sample, gru_step, softmax
from .spectral import Stack, StackStream, load_stack


def lp_combine(base_logits: np.ndarray, coeffs: np.ndarray, basis_rows: np.ndarray) -> np.ndarray:
    """base [B] + sum_k coeffs[k] * basis_rows[k]; basis_rows is [K, B]."""
    base_logits = np.asarray(base_logits, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.size == 0:
        return base_logits.copy()
    basis_rows = np.asarray(basis_rows, dtype=np.float64)
    if basis_rows.shape != (coeffs.size, base_logits.size):
        raise ValueError(f"basis_rows must be [{coeffs.size}, {base_logits.size}]")
    return base_logits + coeffs @ basis_rows


@dataclass
class ArState:
    """Autoregressive loop state; `step` is the global band-step index that
    addresses the sampling stream."""

    h: np.ndarray
    prev_bins: np.ndarray
    hist: np.ndarray
    step: int = 0


class Vocoder:
    def __init__(self, container: WeightContainer):
        cfg = container.config
        self.config: EngineConfig = cfg
        v = cfg.vocoder
        self.cond = load_stack(container, "voc.cond",
                               (v.cond_past, v.cond_future), cfg.audio.n_mels, head=False)
        wx = container.tensor("voc.gru.wx")
        bx = container.tensor("voc.gru.bx")
        wh = container.tensor("voc.gru.wh")
        bhn = container.tensor("voc.gru.bhn")
        h = v.hidden
        self.gru = GruWeights(
            w_r=wx[:h], w_z=wx[h:2 * h], w_n=wx[2 * h:],
            u_r=wh[:h], u_z=wh[h:2 * h], u_n=wh[2 * h:],
            b_r=bx[:h], b_z=bx[h:2 * h], b_n=bx[2 * h:], b_hn=bhn,
        )
        self.embed = container.tensor("voc.embed")            # [M, B, E]
        self.w_bn = container.tensor("voc.bottleneck.w")       # [M*C, H]
        self.b_bn = container.tensor("voc.bottleneck.b")
        self.w_out = container.tensor("voc.head.w")            # [M, B+K, C]
        self.b_out = container.tensor("voc.head.b")
        self.lp_basis = container.tensor("voc.lp_basis")       # [M, B, B]
        self._wh_sparse = container.sparse("voc.gru.wh")
        self.n_bands = v.n_bands
        self.n_bins = v.n_bins
        self.lp_order = v.lp_order

    # -- frame-rate conditioning ---------------------------------------------

    def condition(self, mel: np.ndarray) -> np.ndarray:
        """Converted log-mel [T, n_mels] -> conditioning vectors [T, cond_hidden]."""
        return StackStream(self.cond).forward(mel)

    def cond_stream(self) -> StackStream:
        return StackStream(self.cond)

    # -- reference (float64) autoregression ----------------------------------

    def initial_state(self) -> ArState:
        mid = self.n_bins // 2
        return ArState(
            h=np.zeros(self.gru.hidden),
            prev_bins=np.full(self.n_bands, mid, dtype=np.int64),
            hist=np.full((self.n_bands, self.lp_order), mid, dtype=np.int64),
        )

    def _band_logits_from(self, h: np.ndarray, hist: np.ndarray) -> np.ndarray:
        bn = np.tanh(self.w_bn @ h + self.b_bn)
        c = self.w_bn.shape[0] // self.n_bands
        out = np.empty((self.n_bands, self.n_bins))
        for b in range(self.n_bands):
            head = self.w_out[b] @ bn[b * c:(b + 1) * c] + self.b_out[b]
            basis = self.lp_basis[b, hist[b]] if self.lp_order else np.zeros((0, self.n_bins))
            out[b] = lp_combine(head[:self.n_bins], head[self.n_bins:], basis)
        return out

    def _advance(self, state: ArState, cond_t: np.ndarray, prev: np.ndarray) -> None:
        x = np.concatenate([cond_t] + [self.embed[b, prev[b]] for b in range(self.n_bands)])
        state.h = gru_step(self.gru, state.h, x)

    def _shift(self, state: ArState, new_bins: np.ndarray) -> None:
        if self.lp_order:
            state.hist[:, 1:] = state.hist[:, :-1]
            state.hist[:, 0] = new_bins
        state.prev_bins[:] = new_bins
        state.step += 1

    def ar_step(self, state: ArState, cond_t: np.ndarray, key: int) -> np.ndarray:
        """Sample one bin per band and advance the state."""
        self._advance(state, cond_t, state.prev_bins)
        logits = self._band_logits_from(state.h, state.hist)
        bins = np.empty(self.n_bands, dtype=np.int64)
        for b in range(self.n_bands):
            u = crng.uniform(key, state.step * self.n_bands + b)
            bins[b] = categorical_sample(softmax(logits[b]), u)
        self._shift(state, bins)
        return bins

    def synthesize_reference(self, cond: np.ndarray, key: int,
                             steps_per_frame: int) -> np.ndarray:
        """Sampled bins [T * steps_per_frame, M]; slow float64 path."""
        state = self.initial_state()
        out = np.empty((cond.shape[0] * steps_per_frame, self.n_bands), dtype=np.int64)
        for t in range(cond.shape[0]):
            for _ in range(steps_per_frame):
                idx = state.step  # ar_step advances the counter
                out[idx] = self.ar_step(state, cond[t], key)
        return out

    # -- teacher-forced evaluation --------------------------------------------

    def band_logits(self, cond: np.ndarray, bins: np.ndarray,
                    steps_per_frame: int, want_hidden: bool = False):
        """Logits [steps, M, B] with the autoregressive context taken from
        the given bin sequence (next-step prediction)."""
        steps = bins.shape[0]
        if steps > cond.shape[0] * steps_per_frame:
            raise ValueError("bin sequence longer than conditioning")
        state = self.initial_state()
        logits = np.empty((steps, self.n_bands, self.n_bins))
        hidden = np.empty((steps, self.gru.hidden)) if want_hidden else None
        for t in range(steps):
            self._advance(state, cond[t // steps_per_frame], state.prev_bins)
            logits[t] = self._band_logits_from(state.h, state.hist)
            if want_hidden:
                hidden[t] = state.h
            self._shift(state, bins[t])
        return (logits, hidden) if want_hidden else logits

    def layer_activations(self, cond: np.ndarray, bins: np.ndarray,
                          steps_per_frame: int) -> dict:
        """Named activations of the teacher-forced pass (for layer matching)."""
        logits, hidden = self.band_logits(cond, bins, steps_per_frame, want_hidden=True)
        return {"cond": cond.copy(), "gru": hidden, "logits": logits}

    # -- expected waveform (for spectral losses) ------------------------------

    def expected_bands(self, cond: np.ndarray, bins: np.ndarray,
                       steps_per_frame: int) -> np.ndarray:
        """Per-step expectation of the decoded band value under the
        teacher-forced predictive distribution; [steps, M]."""
        logits = self.band_logits(cond, bins, steps_per_frame)
        levels = mulaw.decode(np.arange(self.n_bins), self.n_bins)
        probs = np.exp(logits - logits.max(axis=2, keepdims=True))
        probs /= probs.sum(axis=2, keepdims=True)
        return probs @ levels


class VocoderStream:
    """Fused float32 synthesis: one call per frame, state carried across
    calls, bins addressed by the global band-step counter."""

    def __init__(self, voc: Vocoder, key: int, steps_per_frame: int):
        v = voc
        self.voc = voc
        self.key = np.uint64(key)
        self.steps_per_frame = steps_per_frame
        cond_dim = v.cond.gru.hidden
        wx = np.vstack([v.gru.w_r, v.gru.w_z, v.gru.w_n])
        bx = np.concatenate([v.gru.b_r, v.gru.b_z, v.gru.b_n])
        self._wx_cond = np.ascontiguousarray(wx[:, :cond_dim], dtype=np.float32)
        self._bx = bx.astype(np.float32)
        # fold the input kernel into the embedding tables: one [B, 3H] row
        # lookup per band replaces the embedding matvec at band rate
        m, bins, e = v.embed.shape
        emb_pre = np.empty((m, bins, wx.shape[0]), dtype=np.float64)
        for b in range(m):
            cols = wx[:, cond_dim + b * e:cond_dim + (b + 1) * e]
            emb_pre[b] = v.embed[b] @ cols.T
        self._emb_pre = emb_pre.astype(np.float32)
        sm = v._wh_sparse
        (self._eidx, self._eval, self._ov_ro, self._ov_ci,
         self._ov_vals) = _fast.ell_from_csr(
            sm.row_offsets, sm.col_indices, sm.values)
        self._bhn = v.gru.b_hn.astype(np.float32)
        self._w_bn = np.ascontiguousarray(v.w_bn, dtype=np.float32)
        self._b_bn = v.b_bn.astype(np.float32)
        self._w_out = np.ascontiguousarray(v.w_out, dtype=np.float32)
        self._b_out = np.ascontiguousarray(v.b_out, dtype=np.float32)
        self._lp = np.ascontiguousarray(v.lp_basis, dtype=np.float32)
        st = v.initial_state()
        self._h = st.h.astype(np.float32)
        self._prev = st.prev_bins
        self._hist = st.hist
        self.step = 0

    def push_cond(self, cond_t: np.ndarray) -> np.ndarray:
        """One conditioning vector -> [steps_per_frame, n_bands] sampled bins."""
        pre = self._wx_cond @ np.asarray(cond_t, dtype=np.float32) + self._bx
        bins = np.empty((self.steps_per_frame, self.voc.n_bands), dtype=np.int64)
        _fast.vocoder_frame(
            self.step, self.key, self.steps_per_frame,
            pre, self._emb_pre,
            self._eidx, self._eval, self._ov_ro, self._ov_ci, self._ov_vals,
            self._bhn,
            self._w_bn, self._b_bn, self._w_out, self._b_out, self._lp,
            self._h, self._prev, self._hist, bins,
        )
        self.step += self.steps_per_frame
        return bins
