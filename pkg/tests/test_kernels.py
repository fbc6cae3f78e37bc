"""Reference kernels vs independent oracles (dense masked matmul, explicit
gate equations, brute-force window convolution), plus f32 fused-kernel parity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcstream import _fast, rng
from vcstream.kernels import (
    DimensionError,
    GruWeights,
    SegConvSpec,
    SegConvStream,
    SparseMatrix,
    categorical_sample,
    gaussian_sample,
    gru_step,
    gru_step_pre,
    laplace_eps,
    laplace_sample,
    segconv,
    softmax,
    sparsify,
    spmv,
)


def _rand_sparse(rs, rows, cols, density):
    dense = rs.standard_normal((rows, cols))
    return sparsify(dense, density), dense


# ---------------------------------------------------------------------------
# sparse matvec


def test_spmv_matches_dense_oracle():
    rs = np.random.RandomState(0)
    for _ in range(50):
        rows = rs.randint(1, 40)
        cols = rs.randint(1, 40)
        sm, _ = _rand_sparse(rs, rows, cols, rs.uniform(0.05, 1.0))
        x = rs.standard_normal(cols)
        assert np.max(np.abs(spmv(sm, x) - sm.to_dense() @ x)) < 1e-12


def test_spmv_shape_check():
    sm = SparseMatrix.from_dense(np.eye(3))
    with pytest.raises(DimensionError):
        spmv(sm, np.zeros(4))


def test_csr_roundtrip():
    rs = np.random.RandomState(1)
    dense = rs.standard_normal((7, 11))
    dense[np.abs(dense) < 0.8] = 0.0
    sm = SparseMatrix.from_dense(dense)
    assert np.array_equal(sm.to_dense(), dense)
    assert sm.nnz == np.count_nonzero(dense)


# ---------------------------------------------------------------------------
# sparsification


def test_sparsify_keeps_largest_magnitudes():
    dense = np.array([[0.1, -5.0, 2.0], [3.0, -0.2, 4.0]])
    sm = sparsify(dense, 0.5)  # ceil(0.5*6) = 3 entries
    expect = np.array([[0.0, -5.0, 0.0], [3.0, 0.0, 4.0]])
    assert np.array_equal(sm.to_dense(), expect)


def test_sparsify_tie_break_is_row_major():
    dense = np.array([[1.0, -2.0], [2.0, 3.0]])
    sm = sparsify(dense, 0.5)  # keep 2: |3| then the first of the |2| tie
    expect = np.array([[0.0, -2.0], [0.0, 3.0]])
    assert np.array_equal(sm.to_dense(), expect)


@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.05, 1.0), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_sparsify_count_and_values(rows, cols, density, seed):
    dense = np.random.RandomState(seed).standard_normal((rows, cols))
    sm = sparsify(dense, density)
    keep = int(np.ceil(density * rows * cols))
    assert sm.nnz == keep
    d = sm.to_dense()
    kept_mask = d != 0
    assert np.array_equal(d[kept_mask], dense[kept_mask])  # values unchanged
    # every kept entry at least as large as every dropped one
    if keep < rows * cols:
        assert np.min(np.abs(dense[kept_mask])) >= np.max(np.abs(dense[~kept_mask])) - 1e-15


def test_sparsify_rejects_bad_density():
    with pytest.raises(ValueError):
        sparsify(np.ones((2, 2)), 0.0)
    with pytest.raises(ValueError):
        sparsify(np.ones((2, 2)), 1.5)


# ---------------------------------------------------------------------------
# GRU cell


def _rand_gru(rs, hidden, in_dim, sparse=False, density=0.6):
    def rec():
        m = rs.standard_normal((hidden, hidden)) / np.sqrt(hidden)
        return sparsify(m, density) if sparse else m

    return GruWeights(
        w_r=rs.standard_normal((hidden, in_dim)) / np.sqrt(in_dim),
        w_z=rs.standard_normal((hidden, in_dim)) / np.sqrt(in_dim),
        w_n=rs.standard_normal((hidden, in_dim)) / np.sqrt(in_dim),
        u_r=rec(), u_z=rec(), u_n=rec(),
        b_r=rs.standard_normal(hidden) * 0.1,
        b_z=rs.standard_normal(hidden) * 0.1,
        b_n=rs.standard_normal(hidden) * 0.1,
        b_hn=rs.standard_normal(hidden) * 0.1,
    )


def _gru_oracle(w, h, x):
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    def dn(m):
        return m.to_dense() if isinstance(m, SparseMatrix) else m

    r = sig(w.w_r @ x + dn(w.u_r) @ h + w.b_r)
    z = sig(w.w_z @ x + dn(w.u_z) @ h + w.b_z)
    n = np.tanh(w.w_n @ x + r * (dn(w.u_n) @ h + w.b_hn) + w.b_n)
    return (1.0 - z) * n + z * h


def test_gru_step_matches_oracle():
    rs = np.random.RandomState(2)
    for sparse in (False, True):
        w = _rand_gru(rs, 17, 9, sparse=sparse)
        h = rs.standard_normal(17)
        x = rs.standard_normal(9)
        assert np.max(np.abs(gru_step(w, h, x) - _gru_oracle(w, h, x))) < 1e-12


def test_gru_step_pre_equivalent():
    rs = np.random.RandomState(3)
    w = _rand_gru(rs, 11, 5, sparse=True)
    h = rs.standard_normal(11)
    x = rs.standard_normal(5)
    pre = np.concatenate([w.w_r @ x + w.b_r, w.w_z @ x + w.b_z, w.w_n @ x + w.b_n])
    assert np.allclose(gru_step_pre(w, h, pre), gru_step(w, h, x), atol=1e-14)


def test_gru_state_stays_bounded():
    rs = np.random.RandomState(4)
    w = _rand_gru(rs, 8, 3)
    h = np.zeros(8)
    for t in range(200):
        h = gru_step(w, h, rs.standard_normal(3))
        assert np.all(np.abs(h) <= 1.0 + 1e-12)


# ---------------------------------------------------------------------------
# segmental convolution


def test_segconv_oracle():
    rs = np.random.RandomState(5)
    spec = SegConvSpec(p=1, n=1, in_dim=2, out_dim=3, kernel=rs.standard_normal((6, 3)))
    window = rs.standard_normal((3, 2))
    want = window.reshape(-1) @ spec.kernel
    assert np.allclose(segconv(spec, window), want, atol=1e-15)
    with pytest.raises(DimensionError):
        segconv(spec, np.zeros((2, 2)))


@given(st.integers(0, 3), st.integers(0, 2), st.integers(1, 9), st.integers(0, 999))
@settings(max_examples=60, deadline=None)
def test_segconv_stream_matches_padded_offline(p, n, nframes, seed):
    rs = np.random.RandomState(seed)
    spec = SegConvSpec(p=p, n=n, in_dim=3, out_dim=2,
                       kernel=rs.standard_normal(((p + 1 + n) * 3, 2)))
    frames = [rs.standard_normal(3) for _ in range(nframes)]

    stream = SegConvStream(spec)
    got = [o for o in (stream.push(f) for f in frames) if o is not None]
    got.extend(stream.flush())

    padded = [frames[0]] * p + frames + [frames[-1]] * n
    want = [segconv(spec, np.stack(padded[t:t + spec.width])) for t in range(nframes)]
    assert len(got) == nframes
    for g, w in zip(got, want):
        assert np.allclose(g, w, atol=1e-12)


# ---------------------------------------------------------------------------
# probability kernels


def test_softmax_frozen_values():
    # oracle: exp([1,2,3]) / sum = [e, e^2, e^3] / (e + e^2 + e^3)
    got = softmax(np.array([1.0, 2.0, 3.0]))
    want = np.array([0.09003057317038046, 0.24472847105479767, 0.6652409557748219])
    assert np.max(np.abs(got - want)) < 1e-15


def test_softmax_shift_invariance_and_extremes():
    logits = np.array([1e4, -1e4, 0.0, 5.0])
    p = softmax(logits)
    assert abs(p.sum() - 1.0) <= 1e-6
    assert np.allclose(p, softmax(logits + 123.456), atol=1e-12)
    assert p[0] > 1.0 - 1e-12
    with pytest.raises(ValueError):
        softmax(np.array([np.inf, 0.0]))


def test_categorical_inverse_cdf_boundaries():
    probs = np.array([0.5, 0.5])
    assert categorical_sample(probs, 0.25) == 0
    assert categorical_sample(probs, 0.5) == 0  # cdf[0] >= u, left side
    assert categorical_sample(probs, 0.500001) == 1
    assert categorical_sample(np.array([0.0, 1.0]), 0.3) == 1


def test_categorical_empirical_frequencies():
    probs = softmax(np.array([0.3, -0.2, 1.1, 0.0]))
    key = rng.derive_key(rng.root_key(11), rng.SITE_VOCODER)
    u = rng.uniforms(key, 0, 50_000)
    counts = np.bincount([categorical_sample(probs, ui) for ui in u], minlength=4)
    assert np.max(np.abs(counts / 50_000 - probs)) < 0.01


def test_laplace_quantile_values():
    assert abs(laplace_eps(0.75) - np.log(2.0)) < 1e-15
    assert abs(laplace_eps(0.25) + np.log(2.0)) < 1e-15
    assert laplace_eps(0.5) == 0.0


def test_laplace_sample_uses_negated_noise():
    key = rng.root_key(21)
    mu = np.array([1.0, -2.0])
    sigma = np.array([0.5, 2.0])
    z = laplace_sample(mu, sigma, key, 100)
    eps = laplace_eps(rng.uniforms(key, 100, 2))
    assert np.allclose(z, mu - sigma * eps, atol=1e-15)


def test_laplace_sample_moments():
    key = rng.derive_key(rng.root_key(5), rng.SITE_LATENT_MAIN)
    z = laplace_sample(np.zeros(100_000), np.ones(100_000), key, 0)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 2.0) < 0.03
    assert abs(np.mean(np.abs(z)) - 1.0) < 0.01


def test_gaussian_sample_moments_and_indexing():
    key = rng.derive_key(rng.root_key(6), rng.SITE_MEL_SAMPLE)
    z = gaussian_sample(np.zeros(100_000), np.ones(100_000), key, 0)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.02
    # draw i consumes uniforms 2i, 2i+1: splitting a vector draw is exact
    whole = gaussian_sample(np.zeros(4), np.ones(4), key, 0)
    first = gaussian_sample(np.zeros(2), np.ones(2), key, 0)
    second = gaussian_sample(np.zeros(2), np.ones(2), key, 4)
    assert np.array_equal(whole, np.concatenate([first, second]))


# ---------------------------------------------------------------------------
# fused f32 kernels vs the reference path


def test_fast_spmv_matches_reference():
    rs = np.random.RandomState(7)
    sm, _ = _rand_sparse(rs, 33, 21, 0.4)
    x = rs.standard_normal(21)
    out = np.zeros(33, np.float32)
    _fast.spmv_add_f32(
        sm.row_offsets.astype(np.int64), sm.col_indices.astype(np.int32),
        sm.values.astype(np.float32), x.astype(np.float32), out)
    assert np.max(np.abs(out - spmv(sm, x))) < 1e-4


def test_fast_gru_matches_reference():
    rs = np.random.RandomState(8)
    hidden, in_dim = 24, 10
    w = _rand_gru(rs, hidden, in_dim, sparse=True, density=0.5)
    stacked = np.vstack([w.u_r.to_dense(), w.u_z.to_dense(), w.u_n.to_dense()])
    sm = SparseMatrix.from_dense(stacked)
    h64 = rs.standard_normal(hidden)
    h32 = h64.astype(np.float32)
    rec = np.zeros(3 * hidden, np.float32)
    for _ in range(5):
        x = rs.standard_normal(in_dim)
        pre = np.concatenate([w.w_r @ x + w.b_r, w.w_z @ x + w.b_z, w.w_n @ x + w.b_n])
        h64 = gru_step(w, h64, x)
        _fast.gru_step_f32(
            sm.row_offsets.astype(np.int64), sm.col_indices.astype(np.int32),
            sm.values.astype(np.float32), w.b_hn.astype(np.float32),
            pre.astype(np.float32), h32, rec)
        assert np.max(np.abs(h32 - h64)) < 1e-4
