"""Counter RNG: determinism, cross-implementation equality, distribution."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from vcstream import rng, _fast


def test_mix64_reference_values():
    # frozen from the splitmix64 reference sequence: state 0 advanced by the
    # golden-ratio increment and finalized
    assert rng.mix64(0x9E3779B97F4A7C15) == 0xE220A8397B1DCDAF
    assert rng.mix64(2 * 0x9E3779B97F4A7C15 & rng.MASK64) == 0x6E789E6AA1B965F4
    assert rng.mix64(3 * 0x9E3779B97F4A7C15 & rng.MASK64) == 0x06C45D188009454F


def test_raw64_is_mix_of_keyed_counter():
    key = rng.root_key(7)
    assert rng.raw64(key, 0) == rng.mix64((key + rng.GOLDEN) & rng.MASK64)
    assert rng.raw64(key, 5) == rng.mix64((key + 6 * rng.GOLDEN) & rng.MASK64)


def test_streams_differ_by_site():
    root = rng.root_key(1234)
    a = rng.derive_key(root, rng.SITE_LATENT_MAIN)
    b = rng.derive_key(root, rng.SITE_VOCODER)
    assert a != b
    ua = rng.uniforms(a, 0, 64)
    ub = rng.uniforms(b, 0, 64)
    assert not np.allclose(ua, ub)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32))
@settings(max_examples=200)
def test_uniform_matches_vectorized(key, counter):
    scalar = rng.uniform(key, counter)
    vec = rng.uniforms(key, counter, 1)[0]
    assert scalar == vec
    assert 0.0 < scalar < 1.0


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_uniform_matches_compiled(key, counter):
    fast = _fast._uniform(np.uint64(key), np.uint64(counter))
    assert fast == rng.uniform(key, counter)


def test_chunk_invariance():
    key = rng.derive_key(rng.root_key(9), rng.SITE_MEL_SAMPLE)
    whole = rng.uniforms(key, 0, 1000)
    parts = np.concatenate([rng.uniforms(key, s, 100) for s in range(0, 1000, 100)])
    assert np.array_equal(whole, parts)


def test_uniform_moments():
    key = rng.root_key(42)
    u = rng.uniforms(key, 0, 200_000)
    assert abs(u.mean() - 0.5) < 2e-3
    assert abs(u.var() - 1.0 / 12.0) < 2e-3
