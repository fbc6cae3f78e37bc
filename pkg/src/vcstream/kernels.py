"""Inference primitives: sparse/dense linear maps, the GRU cell, segmental
convolution, magnitude sparsification, softmax/categorical sampling, and
Laplacian/Gaussian reparameterized sampling.

These are the reference (numpy, float64-friendly) implementations; the
band-rate engine uses fused float32 kernels (see _fast.py) that are
cross-checked against these in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as crng


class DimensionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# sparse matrices


@dataclass
class SparseMatrix:
    """CSR matrix with per-gate density bookkeeping."""

    rows: int
    cols: int
    row_offsets: np.ndarray  # int, length rows+1, monotone
    col_indices: np.ndarray  # int, strictly increasing within each row
    values: np.ndarray
    density: float = field(default=0.0)

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.values = np.asarray(self.values)
        if self.row_offsets.shape != (self.rows + 1,):
            raise DimensionError("row_offsets must have length rows+1")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be monotone nondecreasing")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.values.size:
            raise ValueError("row_offsets must span exactly nnz entries")
        for r in range(self.rows):
            cols = self.col_indices[self.row_offsets[r]:self.row_offsets[r + 1]]
            if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= self.cols):
                raise ValueError(f"bad column indices in row {r}")
        actual = self.nnz / (self.rows * self.cols)
        if not self.density:
            self.density = actual
        elif abs(self.density - actual) > 1e-9:
            raise ValueError("stored density inconsistent with nnz")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=self.values.dtype)
        for r in range(self.rows):
            lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
            out[r, self.col_indices[lo:hi]] = self.values[lo:hi]
        return out

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        dense = np.asarray(dense)
        rows, cols = dense.shape
        mask = dense != 0
        counts = mask.sum(axis=1)
        row_offsets = np.concatenate([[0], np.cumsum(counts)])
        col_indices = np.nonzero(mask)[1]
        values = dense[mask]
        return cls(rows, cols, row_offsets, col_indices, values)


def spmv(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Exact CSR matrix-vector product."""
    x = np.asarray(x)
    if x.shape != (m.cols,):
        raise DimensionError(f"expected vector of length {m.cols}, got {x.shape}")
    out = np.zeros(m.rows, dtype=np.result_type(m.values.dtype, x.dtype))
    for r in range(m.rows):
        lo, hi = m.row_offsets[r], m.row_offsets[r + 1]
        out[r] = np.dot(m.values[lo:hi], x[m.col_indices[lo:hi]])
    return out


def sparsify(dense: np.ndarray, target_density: float) -> SparseMatrix:
    """Keep the ceil(target_density * size) largest-magnitude entries.

    Ties at the cutoff are broken by (row, col) order, so the result is
    deterministic; kept values are preserved exactly.
    """
    dense = np.asarray(dense)
    if not np.all(np.isfinite(dense)):
        raise ValueError("non-finite entries cannot be sparsified")
    if not 0 < target_density <= 1:
        raise ValueError("target_density must be in (0, 1]")
    rows, cols = dense.shape
    keep = int(np.ceil(target_density * rows * cols))
    flat = np.abs(dense).ravel()
    # stable sort on -|v|: equal magnitudes keep ascending flat (row-major) order
    order = np.argsort(-flat, kind="stable")[:keep]
    mask = np.zeros(flat.size, dtype=bool)
    mask[order] = True
    kept = np.where(mask.reshape(rows, cols), dense, 0)
    sm = SparseMatrix.from_dense(kept)
    # explicit zeros that survived pruning are dropped by from_dense; recount
    sm.density = sm.nnz / (rows * cols)
    return sm


# ---------------------------------------------------------------------------
# GRU cell and segmental convolution


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class GruWeights:
    """Gate order is (reset, update, new) throughout.

    Input kernels are dense [H, D] per gate; recurrent kernels may be dense
    arrays or SparseMatrix. b_hn is the recurrent bias of the new gate
    (applied inside the reset product).
    """

    w_r: np.ndarray
    w_z: np.ndarray
    w_n: np.ndarray
    u_r: "np.ndarray | SparseMatrix"
    u_z: "np.ndarray | SparseMatrix"
    u_n: "np.ndarray | SparseMatrix"
    b_r: np.ndarray
    b_z: np.ndarray
    b_n: np.ndarray
    b_hn: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_r.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_r.shape[1]


def _matvec(m, x):
    return spmv(m, x) if isinstance(m, SparseMatrix) else m @ x


def gru_step(w: GruWeights, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One GRU step; reset gate modulates the recurrent candidate term."""
    h = np.asarray(h)
    x = np.asarray(x)
    if h.shape != (w.hidden,) or x.shape != (w.input_dim,):
        raise DimensionError(f"state/input shapes {h.shape}/{x.shape} do not match weights")
    r = _sigmoid(w.w_r @ x + _matvec(w.u_r, h) + w.b_r)
    z = _sigmoid(w.w_z @ x + _matvec(w.u_z, h) + w.b_z)
    n = np.tanh(w.w_n @ x + r * (_matvec(w.u_n, h) + w.b_hn) + w.b_n)
    return (1.0 - z) * n + z * h


def gru_step_pre(w: GruWeights, h: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """GRU step from a precomputed input contribution.

    pre = concat(w_r@x + b_r, w_z@x + b_z, w_n@x + b_n); lets callers hoist
    the input matvec out of band-rate loops.
    """
    hdim = w.hidden
    r = _sigmoid(pre[:hdim] + _matvec(w.u_r, h))
    z = _sigmoid(pre[hdim:2 * hdim] + _matvec(w.u_z, h))
    n = np.tanh(pre[2 * hdim:] + r * (_matvec(w.u_n, h) + w.b_hn))
    return (1.0 - z) * n + z * h


@dataclass
class SegConvSpec:
    """Per-frame linear map over p preceding and n succeeding frames."""

    p: int
    n: int
    in_dim: int
    out_dim: int
    kernel: np.ndarray  # [(p+1+n)*in_dim, out_dim]

    def __post_init__(self):
        want = ((self.p + 1 + self.n) * self.in_dim, self.out_dim)
        if self.kernel.shape != want:
            raise DimensionError(f"kernel shape {self.kernel.shape}, expected {want}")

    @property
    def width(self) -> int:
        return self.p + 1 + self.n


def segconv(spec: SegConvSpec, window: np.ndarray) -> np.ndarray:
    """Apply the kernel to a (p+1+n, in_dim) window, oldest frame first."""
    window = np.asarray(window)
    if window.shape != (spec.width, spec.in_dim):
        raise DimensionError(f"window shape {window.shape}, expected {(spec.width, spec.in_dim)}")
    return window.reshape(-1) @ spec.kernel


class SegConvStream:
    """Streaming wrapper: left edge primes by repeating the first frame;
    flush() repeats the last frame to emit the trailing n outputs."""

    def __init__(self, spec: SegConvSpec):
        self.spec = spec
        self._hist: list[np.ndarray] = []
        self._seen = 0

    def push(self, frame: np.ndarray) -> "np.ndarray | None":
        if not self._hist:
            self._hist = [frame] * (self.spec.p + 1)
        else:
            self._hist.append(frame)
            if len(self._hist) > self.spec.width:
                self._hist.pop(0)
        self._seen += 1
        if self._seen > self.spec.n:
            return segconv(self.spec, np.stack(self._hist))
        return None

    def flush(self) -> list[np.ndarray]:
        """Drain the right edge; total outputs equal total frames pushed."""
        if not self._hist:
            return []
        out = [self.push(self._hist[-1]) for _ in range(self.spec.n)]
        return [o for o in out if o is not None]


# ---------------------------------------------------------------------------
# probability kernels


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtraction); exact shift invariance."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    e = np.exp(logits - logits.max())
    return e / e.sum()


def categorical_sample(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: smallest index whose cumulative mass reaches u."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError("negative probability")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError("probabilities must sum to 1")
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, u, side="left"))


def laplace_eps(u):
    """Standard Laplace quantile: -sign(u-1/2) * ln(1 - 2|u-1/2|)."""
    u = np.asarray(u, dtype=np.float64)
    d = u - 0.5
    return -np.sign(d) * np.log1p(-2.0 * np.abs(d))


def laplace_sample(mu: np.ndarray, sigma: np.ndarray, key: int, counter: int) -> np.ndarray:
    """z = mu - sigma * eps, eps i.i.d. standard Laplace (note the minus)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    u = crng.uniforms(key, counter, mu.size)
    return mu - sigma * laplace_eps(u)


def gaussian_sample(mu: np.ndarray, sigma: np.ndarray, key: int, counter: int) -> np.ndarray:
    """mu + sigma * eta, eta standard normal via Box-Muller.

    Each output consumes two uniforms (counters 2i and 2i+1 relative to
    `counter`), so vector draws stay addressable by absolute index.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    u = crng.uniforms(key, counter, 2 * mu.size)
    u1, u2 = u[0::2], u[1::2]
    eta = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return mu + sigma * eta
