"""Weight container format, deterministic initialization, and pruning."""

import struct

import numpy as np
import pytest

from vcstream.config import paper_scale_config, toy_config, with_fine_tuning
from vcstream.container import (
    SPARSE_SPECTRAL,
    SPARSE_VOCODER,
    ContainerChecksumError,
    ContainerMagicError,
    ContainerVersionError,
    MissingTensorError,
    WeightContainer,
    gate_densities,
    init_random,
    sparsify_container,
    tensor_shapes,
)


def test_save_load_roundtrip(toy_container, tmp_path):
    path = tmp_path / "w.mwvc"
    toy_container.save(path)
    loaded = WeightContainer.load(path)
    assert sorted(loaded.names()) == sorted(toy_container.names())
    assert loaded.seed == toy_container.seed
    assert loaded.config.to_dict() == toy_container.config.to_dict()
    for name in toy_container.names():
        assert loaded.is_sparse(name) == toy_container.is_sparse(name)
        if toy_container.is_sparse(name):
            a, b = toy_container.sparse(name), loaded.sparse(name)
            assert np.array_equal(a.row_offsets, b.row_offsets)
            assert np.array_equal(a.col_indices, b.col_indices)
            assert np.array_equal(a.values, b.values)
        else:
            np.testing.assert_array_equal(
                np.asarray(toy_container._tensors[name], dtype=np.float32),
                loaded._tensors[name])


def test_save_is_deterministic(toy_container, tmp_path):
    p1, p2 = tmp_path / "a.mwvc", tmp_path / "b.mwvc"
    toy_container.save(p1)
    toy_container.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(toy_container, tmp_path):
    path = tmp_path / "w.mwvc"
    toy_container.save(path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerMagicError):
        WeightContainer.load(path)


def test_short_file_is_magic_error(tmp_path):
    path = tmp_path / "w.mwvc"
    path.write_bytes(b"MW")
    with pytest.raises(ContainerMagicError):
        WeightContainer.load(path)


def test_bad_version(toy_container, tmp_path):
    path = tmp_path / "w.mwvc"
    toy_container.save(path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerVersionError):
        WeightContainer.load(path)


def test_bad_checksum(toy_container, tmp_path):
    path = tmp_path / "w.mwvc"
    toy_container.save(path)
    raw = bytearray(path.read_bytes())
    raw[-20] ^= 0xFF  # flip a payload byte
    path.write_bytes(bytes(raw))
    with pytest.raises(ContainerChecksumError):
        WeightContainer.load(path)


def test_missing_tensor(toy_container):
    with pytest.raises(MissingTensorError):
        toy_container.tensor("does.not.exist")


def test_init_is_deterministic():
    cfg = toy_config()
    a = init_random(cfg, seed=7)
    b = init_random(cfg, seed=7)
    for name in a.names():
        ta, tb = a._tensors[name], b._tensors[name]
        if a.is_sparse(name):
            assert np.array_equal(ta.values, tb.values)
        else:
            np.testing.assert_array_equal(ta, tb)
    c = init_random(cfg, seed=8)
    assert not np.array_equal(a.tensor("dec.gru.wx"), c.tensor("dec.gru.wx"))


def test_tensor_names_seeded_independently():
    """Identically-shaped tensors must not share values."""
    c = init_random(toy_config(), seed=0, sparse=False)
    assert not np.array_equal(c.tensor("enc_main.gru.wx"),
                              c.tensor("enc_aux.gru.wx"))


def test_shapes_match_inventory(toy_container):
    shapes = tensor_shapes(toy_container.config)
    assert sorted(toy_container.names()) == sorted(shapes)
    for name, shape in shapes.items():
        if toy_container.is_sparse(name):
            sm = toy_container.sparse(name)
            assert (sm.rows, sm.cols) == shape
        else:
            assert toy_container.tensor(name).shape == tuple(shape)


def test_fine_tuned_layout_drops_excitation():
    cfg = with_fine_tuning(toy_config(), True)
    c = init_random(cfg, seed=0)
    assert not any(n.startswith("exc.") for n in c.names())
    pre = init_random(with_fine_tuning(toy_config(), False), seed=0)
    assert any(n.startswith("exc.") for n in pre.names())


def test_paper_scale_gate_densities():
    c = init_random(paper_scale_config(), seed=0)
    for name in SPARSE_SPECTRAL:
        r, z, n, combined = gate_densities(c.sparse(name))
        h = c.sparse(name).cols
        slack = 1.0 / (h * h)  # keep-count rounds up by at most one entry
        assert abs(r - 0.685) <= slack
        assert abs(z - 0.685) <= slack
        assert abs(n - 0.88) <= slack
        assert abs(combined - 0.75) <= 0.005
    r, z, n, combined = gate_densities(c.sparse(SPARSE_VOCODER[0]))
    h = c.sparse(SPARSE_VOCODER[0]).cols
    slack = 1.0 / (h * h)
    assert abs(r - 0.095) <= slack
    assert abs(z - 0.095) <= slack
    assert abs(n - 0.11) <= slack


def test_sparsify_keeps_largest_entries():
    cfg = toy_config()
    dense = init_random(cfg, seed=4, sparse=False)
    pruned = sparsify_container(dense, spectral_density=(0.4, 0.5, 0.6),
                                vocoder_density=(0.2, 0.2, 0.3))
    name = "dec.gru.wh"
    full = np.asarray(dense.tensor(name), dtype=np.float32)
    sm = pruned.sparse(name)
    got = sm.to_dense()
    h = sm.cols
    mask = got != 0
    # surviving entries keep their exact values
    np.testing.assert_array_equal(got[mask], full.astype(np.float32)[mask])
    # per-gate keep counts follow ceil(density * gate size)
    for g, d in enumerate((0.4, 0.5, 0.6)):
        kept = int(mask[g * h:(g + 1) * h].sum())
        assert kept == int(np.ceil(d * h * h))
        # every dropped entry is <= the smallest kept magnitude
        gate = np.abs(full[g * h:(g + 1) * h])
        kept_mags = gate[mask[g * h:(g + 1) * h]]
        dropped = gate[~mask[g * h:(g + 1) * h]]
        if dropped.size:
            assert dropped.max() <= kept_mags.min() + 1e-12


def test_densify_on_demand(toy_container):
    name = SPARSE_SPECTRAL[0]
    assert toy_container.is_sparse(name)
    dense = toy_container.tensor(name)
    np.testing.assert_allclose(dense, toy_container.sparse(name).to_dense())


def test_lf0_stats_are_plausible(toy_container):
    stats = toy_container.tensor("spk.lf0_stats")
    assert stats.shape == (toy_container.config.spectral.n_speakers, 2)
    assert np.all(stats[:, 1] > 0)
    assert np.all((stats[:, 0] > 3.0) & (stats[:, 0] < 6.5))
