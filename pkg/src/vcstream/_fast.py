"""Fused float32 kernels for the band-rate sampling loop and sparse GRU steps.

Everything here is written as scalar loops so numba can compile it into a
handful of cache-bandwidth-bound passes; the same source runs (slowly) as
plain Python when numba is unavailable. All state lives in caller-owned
arrays, so results are invariant to how the input is chunked.

The uniform generator mirrors rng.py exactly (same splitmix64 finalizer,
same counter schedule); cross-implementation equality is pinned in tests.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_SH30 = U64(30)
_SH27 = U64(27)
_SH31 = U64(31)
_SH11 = U64(11)
_ONE = U64(1)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _SH30)) * _MIX1
    z = (z ^ (z >> _SH27)) * _MIX2
    return z ^ (z >> _SH31)


@njit(cache=True)
def _uniform(key, counter):
    z = _mix64(key + (counter + _ONE) * _GOLDEN)
    return (np.float64(z >> _SH11) + 0.5) * 2.0 ** -53


@njit(cache=True, fastmath=True)
def spmv_add_f32(row_offsets, col_indices, values, x, out):
    """out += A @ x for a CSR matrix; f32 accumulate per row.

    Four independent accumulators break the add dependency chain so the
    gather loads pipeline; col_indices should be int32 to halve index
    traffic on the band-rate path.
    """
    for r in range(row_offsets.size - 1):
        j = row_offsets[r]
        j1 = row_offsets[r + 1]
        a0 = np.float32(0.0)
        a1 = np.float32(0.0)
        a2 = np.float32(0.0)
        a3 = np.float32(0.0)
        while j + 4 <= j1:
            a0 += values[j] * x[col_indices[j]]
            a1 += values[j + 1] * x[col_indices[j + 1]]
            a2 += values[j + 2] * x[col_indices[j + 2]]
            a3 += values[j + 3] * x[col_indices[j + 3]]
            j += 4
        while j < j1:
            a0 += values[j] * x[col_indices[j]]
            j += 1
        out[r] += (a0 + a1) + (a2 + a3)


def ell_from_csr(row_offsets, col_indices, values, lane=16):
    """Repack a CSR matrix into padded ELL plus a CSR overflow tail.

    Rows are padded to a common width (a multiple of `lane` so the
    fixed-trip inner loop has no vector epilogue); pad slots point at
    column 0 with weight 0. The regular [rows, width] shape is what lets
    LLVM turn the gather loop into 16-lane vector gathers, which is worth
    far more than the padding overhead on magnitude-pruned kernels.

    Magnitude pruning leaves a long tail of slightly-overfull rows, so
    padding to the true maximum wastes ~50% of the lanes. Instead the
    width is chosen by a small cost model (vector lanes are ~4x cheaper
    than scalar CSR entries) and whatever does not fit goes into a scalar
    CSR tail that the caller adds on top. Indices narrow to uint16 when
    the column count allows it.
    """
    rows = row_offsets.size - 1
    counts = np.diff(row_offsets).astype(np.int64)
    wmax = int(counts.max()) if rows else 0
    wmax = max(lane, ((wmax + lane - 1) // lane) * lane)
    best_w, best_cost = wmax, None
    for w in range(lane, wmax + 1, lane):
        cost = rows * w + 4 * int(np.maximum(counts - w, 0).sum())
        if best_cost is None or cost < best_cost:
            best_w, best_cost = w, cost
    width = best_w
    cols = int(col_indices.max()) + 1 if col_indices.size else 1
    itype = np.uint16 if cols <= np.iinfo(np.uint16).max else np.int32
    idx = np.zeros((rows, width), itype)
    val = np.zeros((rows, width), np.float32)
    kept = np.minimum(counts, width)
    filled = np.arange(width)[None, :] < kept[:, None]
    in_ell = (np.arange(col_indices.size)
              < np.repeat(row_offsets[:-1] + kept, counts)) if rows else \
        np.zeros(0, bool)
    idx[filled] = col_indices[in_ell]
    val[filled] = values[in_ell]
    ov_ro = np.zeros(rows + 1, np.int64)
    ov_ro[1:] = np.cumsum(counts - kept)
    ov_ci = col_indices[~in_ell].astype(np.int32)
    ov_vals = values[~in_ell].astype(np.float32)
    return idx, val, ov_ro, ov_ci, ov_vals


@njit(cache=True, fastmath=True)
def spmv_ell_f32(ell_idx, ell_val, x, out):
    """out = A @ x for a padded-ELL matrix; f32 accumulate per row."""
    rows, width = ell_val.shape
    for r in range(rows):
        acc = np.float32(0.0)
        for k in range(width):
            acc += ell_val[r, k] * x[ell_idx[r, k]]
        out[r] = acc


@njit(cache=True)
def _gru_pointwise(pre, rec, b_hn, h):
    hidden = h.size
    for i in range(hidden):
        r = 1.0 / (1.0 + np.exp(-np.float64(pre[i] + rec[i])))
        z = 1.0 / (1.0 + np.exp(-np.float64(pre[hidden + i] + rec[hidden + i])))
        n = np.tanh(np.float64(pre[2 * hidden + i]) + r * (np.float64(rec[2 * hidden + i]) + np.float64(b_hn[i])))
        h[i] = np.float32((1.0 - z) * n + z * np.float64(h[i]))


_LOG2E = 1.4426950408889634074
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
# exp(r) Taylor coefficients 1/k!, k = 13 .. 2 (Horner order); degree 13 keeps
# the truncation error on |r| <= ln2/2 below a tenth of an ulp.
_EC13 = 1.6059043836821613e-10
_EC12 = 2.08767569878681e-09
_EC11 = 2.505210838544172e-08
_EC10 = 2.7557319223985893e-07
_EC9 = 2.755731922398589e-06
_EC8 = 2.48015873015873e-05
_EC7 = 1.984126984126984e-04
_EC6 = 1.3888888888888889e-03
_EC5 = 8.333333333333333e-03
_EC4 = 4.1666666666666664e-02
_EC3 = 1.6666666666666666e-01
_EC2 = 0.5


@njit(cache=True)
def _vexp(x, out, ibuf):
    """out[i] = exp(x[i]) for float64 x, accurate to a couple of ulp.

    Pure-arithmetic range reduction + Taylor polynomial + exponent-bit
    scaling, so LLVM turns the whole thing into 8-lane vector code; libm
    exp calls in the sampling loop are the alternative and cost an order
    of magnitude more. Inputs are clamped to +-708 (beyond that float64
    exp is 0/inf anyway; clamping keeps the bit trick in range). No
    fastmath here: the hi/lo range reduction must not be reassociated.
    """
    n_ = x.size
    for i in range(n_):
        v = x[i]
        v = 708.0 if v > 708.0 else v
        v = -708.0 if v < -708.0 else v
        k = np.floor(v * _LOG2E + 0.5)
        r = (v - k * _LN2_HI) - k * _LN2_LO
        p = _EC13
        p = p * r + _EC12
        p = p * r + _EC11
        p = p * r + _EC10
        p = p * r + _EC9
        p = p * r + _EC8
        p = p * r + _EC7
        p = p * r + _EC6
        p = p * r + _EC5
        p = p * r + _EC4
        p = p * r + _EC3
        p = p * r + _EC2
        p = p * r + 1.0
        p = p * r + 1.0
        out[i] = p
        ibuf[i] = np.int64(k)
    for i in range(n_):
        ibuf[i] = (ibuf[i] + 1023) << 52
    scale = ibuf.view(np.float64)
    for i in range(n_):
        out[i] = out[i] * scale[i]


@njit(cache=True)
def _gru_pointwise_v(pre, rec, b_hn, h, args, eout, ibuf):
    """Same update as _gru_pointwise, with the transcendentals batched
    through _vexp; sigmoid = 1/(1+exp(-a)), tanh = (e-1)/(e+1) on e=exp(2a).
    args/eout/ibuf are [2*hidden] scratch."""
    hidden = h.size
    for i in range(2 * hidden):
        args[i] = -np.float64(pre[i] + rec[i])
    _vexp(args, eout, ibuf)
    ah = args[:hidden]
    for i in range(hidden):
        r = 1.0 / (1.0 + eout[i])
        ah[i] = 2.0 * (np.float64(pre[2 * hidden + i])
                       + r * (np.float64(rec[2 * hidden + i]) + np.float64(b_hn[i])))
    _vexp(ah, eout[:hidden], ibuf[:hidden])
    for i in range(hidden):
        z = 1.0 / (1.0 + eout[hidden + i])
        n = (eout[i] - 1.0) / (eout[i] + 1.0)
        h[i] = np.float32((1.0 - z) * n + z * np.float64(h[i]))


@njit(cache=True, fastmath=True)
def gru_step_f32(row_offsets, col_indices, values, b_hn, pre, h, rec_scratch):
    """One fused GRU step. pre = W@x + input biases, concatenated (r,z,n)."""
    for i in range(rec_scratch.size):
        rec_scratch[i] = np.float32(0.0)
    spmv_add_f32(row_offsets, col_indices, values, h, rec_scratch)
    _gru_pointwise(pre, rec_scratch, b_hn, h)


@njit(cache=True, fastmath=True)
def vocoder_frame(
    step0,        # global band-step index of the first step this frame
    key,          # uint64 stream key for the sampler
    nsteps,       # band-steps this frame (hop // n_bands)
    pre_frame,    # f32[3H]: conditioning contribution + input biases
    emb_pre,      # f32[M, B, 3H]: input kernel premultiplied into embeddings
    ell_idx, ell_val,  # padded-ELL recurrent kernel, [3H x H]
    ov_ro, ov_ci, ov_vals,  # CSR tail: entries past the ELL width
    b_hn,         # f32[H] recurrent bias of the candidate gate
    w_bn, b_bn,   # f32[M*C, H], f32[M*C] shared bottleneck
    w_out, b_out,  # f32[M, B+K, C], f32[M, B+K] per-band heads
    r_table,      # f32[M, B, B] logit-offset basis rows, shared across lags
    h,            # f32[H] in/out
    prev_bins,    # i64[M] in/out: bins sampled one step back
    hist,         # i64[M, K] in/out: hist[b, k] = bin sampled k+1 steps back
    bins_out,     # i64[nsteps, M] out
):
    three_h = pre_frame.size
    hidden = h.size
    n_bands = r_table.shape[0]
    n_bins = r_table.shape[1]
    order = hist.shape[1]
    chans = w_out.shape[2]

    pre = np.empty(three_h, np.float32)
    rec = np.empty(three_h, np.float32)
    bnv = np.empty(w_bn.shape[0], np.float32)
    logit = np.empty(n_bins, np.float64)
    prob = np.empty(n_bins, np.float64)
    args = np.empty(2 * hidden, np.float64)
    eout = np.empty(2 * hidden, np.float64)
    ibuf = np.empty(2 * hidden, np.int64)
    ib_bins = np.empty(n_bins, np.int64)

    for t in range(nsteps):
        for i in range(three_h):
            pre[i] = pre_frame[i]
        for b in range(n_bands):
            row = emb_pre[b, prev_bins[b]]
            for i in range(three_h):
                pre[i] += row[i]
        spmv_ell_f32(ell_idx, ell_val, h, rec)
        spmv_add_f32(ov_ro, ov_ci, ov_vals, h, rec)
        _gru_pointwise_v(pre, rec, b_hn, h, args, eout, ibuf)

        for j in range(bnv.size):
            acc = np.float32(0.0)
            for i in range(hidden):
                acc += w_bn[j, i] * h[i]
            bnv[j] = np.float32(np.tanh(np.float64(acc + b_bn[j])))

        for b in range(n_bands):
            base = b * chans
            for i in range(n_bins):
                acc = np.float32(0.0)
                for c in range(chans):
                    acc += w_out[b, i, c] * bnv[base + c]
                logit[i] = np.float64(acc + b_out[b, i])
            for k in range(order):
                acc = np.float32(0.0)
                for c in range(chans):
                    acc += w_out[b, n_bins + k, c] * bnv[base + c]
                a = np.float64(acc + b_out[b, n_bins + k])
                rv = r_table[b, hist[b, k]]
                for i in range(n_bins):
                    logit[i] += a * np.float64(rv[i])

            mx = logit[0]
            for i in range(1, n_bins):
                if logit[i] > mx:
                    mx = logit[i]
            for i in range(n_bins):
                logit[i] -= mx
            _vexp(logit, prob, ib_bins)
            tot = 0.0
            for i in range(n_bins):
                tot += prob[i]
            u = _uniform(key, U64(step0 + t) * U64(n_bands) + U64(b))
            cut = u * tot
            acc2 = 0.0
            sel = n_bins - 1
            for i in range(n_bins):
                acc2 += prob[i]
                if acc2 >= cut:
                    sel = i
                    break
            bins_out[t, b] = sel

        for b in range(n_bands):
            if order > 0:
                for k in range(order - 1, 0, -1):
                    hist[b, k] = hist[b, k - 1]
                hist[b, 0] = bins_out[t, b]
            prev_bins[b] = bins_out[t, b]


def warmup():
    """Force-compile the kernels on tiny inputs (first call is slow)."""
    ro = np.array([0, 1], np.int64)
    ci = np.array([0], np.int32)
    vals = np.ones(1, np.float32)
    x = np.ones(1, np.float32)
    out = np.zeros(1, np.float32)
    spmv_add_f32(ro, ci, vals, x, out)
    h = np.zeros(1, np.float32)
    ro3 = np.array([0, 0, 0, 1], np.int64)
    gru_step_f32(ro3, ci, vals, np.zeros(1, np.float32), np.zeros(3, np.float32), h, np.zeros(3, np.float32))
    eidx, evals, ov_ro, ov_ci, ov_vals = ell_from_csr(ro3, ci, vals)
    spmv_ell_f32(eidx, evals, x, np.zeros(3, np.float32))
    vocoder_frame(
        0, U64(1), 1,
        np.zeros(3, np.float32),
        np.zeros((1, 2, 3), np.float32),
        eidx, evals, ov_ro, ov_ci, ov_vals,
        np.zeros(1, np.float32),
        np.zeros((1, 1), np.float32), np.zeros(1, np.float32),
        np.zeros((1, 3, 1), np.float32), np.zeros((1, 3), np.float32),
        np.zeros((1, 2, 2), np.float32),
        np.zeros(1, np.float32),
        np.zeros(1, np.int64),
        np.zeros((1, 1), np.int64),
        np.zeros((1, 1), np.int64),
    )
