"""Multiband autoregressive vocoder: logit-space linear prediction, the
reference float64 sampler, and the compiled streaming path."""

import numpy as np
import pytest

from vcstream import rng as crng
from vcstream.vocoder import Vocoder, VocoderStream, lp_combine


@pytest.fixture(scope="module")
def voc(toy_container):
    return Vocoder(toy_container)


@pytest.fixture(scope="module")
def cond(voc, toy_mel):
    return voc.condition(toy_mel)


def _brute_force_lp(base, coeffs, basis_rows):
    out = np.array(base, dtype=np.float64)
    for k in range(coeffs.shape[0]):
        out = out + coeffs[k] * basis_rows[k]
    return out


@pytest.mark.parametrize("order", [0, 1, 8])
def test_lp_combine_matches_brute_force(order):
    rng = np.random.default_rng(order)
    n_bins = 32
    for _ in range(200):
        base = rng.normal(size=n_bins)
        coeffs = rng.normal(size=order)
        basis = rng.normal(size=(order, n_bins))
        got = lp_combine(base, coeffs, basis)
        np.testing.assert_allclose(got, _brute_force_lp(base, coeffs, basis),
                                   atol=1e-12, rtol=0)


def test_lp_combine_zero_order_is_identity():
    base = np.arange(8, dtype=np.float64)
    got = lp_combine(base, np.zeros(0), np.zeros((0, 8)))
    np.testing.assert_array_equal(got, base)


def test_lp_combine_rejects_bad_basis():
    with pytest.raises(ValueError):
        lp_combine(np.zeros(8), np.zeros(2), np.zeros((3, 8)))


def test_conditioning_shape(voc, cond, toy_mel):
    assert cond.shape == (toy_mel.shape[0], voc.config.vocoder.cond_hidden)


def test_initial_state(voc):
    st = voc.initial_state()
    mid = voc.n_bins // 2
    assert st.step == 0
    assert np.all(st.prev_bins == mid)
    assert st.hist.shape == (voc.n_bands, max(voc.lp_order, 1))
    assert np.all(st.hist == mid)
    assert np.all(st.h == 0)


def test_reference_sampler_deterministic(voc, cond):
    key = crng.derive_key(crng.root_key(0), crng.SITE_VOCODER)
    a = voc.synthesize_reference(cond[:4], key, steps_per_frame=6)
    b = voc.synthesize_reference(cond[:4], key, steps_per_frame=6)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (24, voc.n_bands)
    assert a.min() >= 0 and a.max() < voc.n_bins
    key2 = crng.derive_key(crng.root_key(1), crng.SITE_VOCODER)
    c = voc.synthesize_reference(cond[:4], key2, steps_per_frame=6)
    assert not np.array_equal(a, c)


def test_stream_matches_reference_bins(voc, cond):
    """The fused float32 streaming kernel must reproduce the float64
    reference sampler bin for bin (same counters, same inverse-CDF walk)."""
    key = crng.derive_key(crng.root_key(7), crng.SITE_VOCODER)
    spf = voc.config.steps_per_frame
    ref = voc.synthesize_reference(cond, key, spf)
    stream = VocoderStream(voc, key, spf)
    got = np.concatenate([stream.push_cond(c) for c in cond], axis=0)
    assert got.shape == ref.shape
    mismatch = int((got != ref).sum())
    assert mismatch == 0, f"{mismatch} of {ref.size} bins differ"


def test_stream_logits_close_to_reference(voc, cond):
    """Teacher-forced hidden-state agreement between the two precisions."""
    key = crng.derive_key(crng.root_key(7), crng.SITE_VOCODER)
    spf = voc.config.steps_per_frame
    stream = VocoderStream(voc, key, spf)
    for c in cond[:3]:
        stream.push_cond(c)
    # replay the same bins through the float64 teacher-forced path
    stream2 = VocoderStream(voc, key, spf)
    bins = np.concatenate([stream2.push_cond(c) for c in cond[:3]], axis=0)
    logits, hidden = voc.band_logits(cond[:3], bins, spf, want_hidden=True)
    assert np.max(np.abs(stream._h - hidden[-1])) < 1e-4


def test_band_logits_shapes(voc, cond):
    spf = voc.config.steps_per_frame
    key = crng.derive_key(crng.root_key(0), crng.SITE_VOCODER)
    bins = voc.synthesize_reference(cond[:3], key, spf)
    logits = voc.band_logits(cond[:3], bins, spf)
    assert logits.shape == (3 * spf, voc.n_bands, voc.n_bins)
    with pytest.raises(ValueError):
        voc.band_logits(cond[:1], bins, spf)


def test_band_logits_use_lp_history(voc, cond):
    """Changing one past bin changes the next step's logits through the
    learned-basis term."""
    spf = voc.config.steps_per_frame
    key = crng.derive_key(crng.root_key(0), crng.SITE_VOCODER)
    bins = voc.synthesize_reference(cond[:2], key, spf)
    tweaked = bins.copy()
    t = bins.shape[0] - 2
    tweaked[t, 0] = (tweaked[t, 0] + 1) % voc.n_bins
    a = voc.band_logits(cond[:2], bins, spf)
    b = voc.band_logits(cond[:2], tweaked, spf)
    assert not np.allclose(a[t + 1], b[t + 1])


def test_expected_bands_range(voc, cond):
    spf = voc.config.steps_per_frame
    key = crng.derive_key(crng.root_key(0), crng.SITE_VOCODER)
    bins = voc.synthesize_reference(cond[:3], key, spf)
    exp = voc.expected_bands(cond[:3], bins, spf)
    assert exp.shape == bins.shape
    assert np.all(exp >= -1.0) and np.all(exp <= 1.0)


def test_layer_activations(voc, cond):
    spf = voc.config.steps_per_frame
    key = crng.derive_key(crng.root_key(0), crng.SITE_VOCODER)
    bins = voc.synthesize_reference(cond[:2], key, spf)
    acts = voc.layer_activations(cond[:2], bins, spf)
    assert sorted(acts) == ["cond", "gru", "logits"]
    assert acts["gru"].shape == (bins.shape[0], voc.config.vocoder.hidden)


def test_sampling_counter_is_step_by_band(voc, cond):
    """Draw addressing is step * n_bands + band: re-running from a state at
    step s consumes the same uniforms as the whole-sequence run."""
    key = crng.derive_key(crng.root_key(3), crng.SITE_VOCODER)
    spf = voc.config.steps_per_frame
    whole = voc.synthesize_reference(cond[:2], key, spf)

    state = voc.initial_state()
    got = []
    for t in range(2):
        for _ in range(spf):
            got.append(voc.ar_step(state, cond[t], key))
    np.testing.assert_array_equal(np.stack(got), whole)
