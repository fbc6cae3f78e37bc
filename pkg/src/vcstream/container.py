"""Weight container: a single binary file holding the model configuration
and every tensor, with CRC-protected payload.

Layout:
    b"MWVC" | u32 version | u32 meta_len | metadata JSON | payload | u32 crc32

crc32 covers metadata + payload. The metadata carries the engine config and
a tensor directory; each entry records name, kind (dense | csr), shape, and
byte offset into the payload. Dense tensors are float32 little-endian
row-major. CSR tensors are u32 row_offsets[rows+1] | u32 col_indices[nnz] |
f32 values[nnz].
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from . import rng as crng
from .config import EngineConfig
from .kernels import SparseMatrix, sparsify

MAGIC = b"MWVC"
VERSION = 1


class ContainerError(Exception):
    """Base class for weight-container failures."""


class ContainerMagicError(ContainerError):
    pass


class ContainerVersionError(ContainerError):
    pass


class ContainerChecksumError(ContainerError):
    pass


class MissingTensorError(ContainerError):
    pass


class WeightContainer:
    def __init__(self, config: EngineConfig, tensors: dict, seed: "int | None" = None):
        self.config = config
        self.seed = seed
        self._tensors = dict(tensors)

    def names(self) -> list:
        return sorted(self._tensors)

    def has(self, name: str) -> bool:
        return name in self._tensors

    def tensor(self, name: str) -> np.ndarray:
        """Dense view of a tensor (CSR entries are densified)."""
        t = self._raw(name)
        return t.to_dense().astype(np.float64) if isinstance(t, SparseMatrix) else np.asarray(t, dtype=np.float64)

    def sparse(self, name: str) -> SparseMatrix:
        t = self._raw(name)
        if isinstance(t, SparseMatrix):
            return t
        return SparseMatrix.from_dense(np.asarray(t))

    def is_sparse(self, name: str) -> bool:
        return isinstance(self._raw(name), SparseMatrix)

    def _raw(self, name: str):
        try:
            return self._tensors[name]
        except KeyError:
            raise MissingTensorError(f"container has no tensor {name!r}") from None

    def put(self, name: str, tensor) -> None:
        self._tensors[name] = tensor

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        directory = []
        chunks = []
        offset = 0
        for name in self.names():
            t = self._tensors[name]
            if isinstance(t, SparseMatrix):
                ro = t.row_offsets.astype("<u4").tobytes()
                ci = t.col_indices.astype("<u4").tobytes()
                vals = t.values.astype("<f4").tobytes()
                blob = ro + ci + vals
                directory.append({"name": name, "kind": "csr",
                                  "shape": [t.rows, t.cols], "nnz": t.nnz,
                                  "offset": offset})
            else:
                arr = np.ascontiguousarray(t, dtype="<f4")
                blob = arr.tobytes()
                directory.append({"name": name, "kind": "dense",
                                  "shape": list(arr.shape), "offset": offset})
            chunks.append(blob)
            offset += len(blob)
        meta = {
            "format": "mwvc",
            "config": self.config.to_dict(),
            "seed": self.seed,
            "tensors": directory,
        }
        meta_bytes = json.dumps(meta, sort_keys=True).encode()
        payload = b"".join(chunks)
        crc = zlib.crc32(meta_bytes + payload) & 0xFFFFFFFF
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", VERSION, len(meta_bytes)))
            f.write(meta_bytes)
            f.write(payload)
            f.write(struct.pack("<I", crc))

    @classmethod
    def load(cls, path) -> "WeightContainer":
        raw = Path(path).read_bytes()
        if len(raw) < 16 or raw[:4] != MAGIC:
            raise ContainerMagicError(f"{path}: not a weight container")
        version, meta_len = struct.unpack("<II", raw[4:12])
        if version != VERSION:
            raise ContainerVersionError(f"{path}: unsupported container version {version}")
        body = raw[12:-4]
        (crc,) = struct.unpack("<I", raw[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise ContainerChecksumError(f"{path}: checksum mismatch")
        try:
            meta = json.loads(body[:meta_len])
        except (ValueError, UnicodeDecodeError) as e:
            raise ContainerError(f"{path}: bad metadata: {e}") from None
        payload = body[meta_len:]
        tensors = {}
        for entry in meta["tensors"]:
            off = entry["offset"]
            shape = entry["shape"]
            if entry["kind"] == "dense":
                n = int(np.prod(shape)) if shape else 1
                arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off)
                tensors[entry["name"]] = arr.reshape(shape).astype(np.float32)
            elif entry["kind"] == "csr":
                rows, cols = shape
                nnz = entry["nnz"]
                ro = np.frombuffer(payload, dtype="<u4", count=rows + 1, offset=off)
                ci = np.frombuffer(payload, dtype="<u4", count=nnz,
                                   offset=off + 4 * (rows + 1))
                vals = np.frombuffer(payload, dtype="<f4", count=nnz,
                                     offset=off + 4 * (rows + 1 + nnz))
                tensors[entry["name"]] = SparseMatrix(
                    rows, cols, ro.astype(np.int64), ci.astype(np.int64),
                    vals.astype(np.float32))
            else:
                raise ContainerError(f"unknown tensor kind {entry['kind']!r}")
        return cls(config=EngineConfig.from_dict(meta["config"]),
                   tensors=tensors, seed=meta.get("seed"))


# ---------------------------------------------------------------------------
# model tensor inventory


def _stack_specs(cfg: EngineConfig) -> dict:
    """name -> (conv_width, conv_in, conv_out, hidden, head_out | None)."""
    a, s, v = cfg.audio, cfg.spectral, cfg.vocoder
    specs = {
        "enc_main": (s.enc_past + 1 + s.enc_future, a.n_mels, s.enc_conv_out,
                     s.enc_hidden, 2 * s.latent_dim),
        "enc_aux": (s.enc_past + 1 + s.enc_future, a.n_mels, s.enc_conv_out,
                    s.enc_hidden, 2 * s.latent_dim),
        "dec": (s.dec_past + 1 + s.dec_future, s.n_speakers + 2 * s.latent_dim,
                s.dec_conv_out, s.dec_hidden, 2 * a.n_mels),
        "cls": (s.cls_past + 1 + s.cls_future, 2 * s.latent_dim,
                s.cls_conv_out, s.cls_hidden, s.n_speakers),
        "voc.cond": (v.cond_past + 1 + v.cond_future, a.n_mels,
                     v.cond_conv_out, v.cond_hidden, None),
    }
    if not s.fine_tuned:
        specs["exc"] = (s.exc_past + 1 + s.exc_future, s.n_speakers + s.latent_dim,
                        s.exc_conv_out, s.exc_hidden, s.exc_out)
    return specs


def tensor_shapes(cfg: EngineConfig) -> dict:
    """Full inventory of tensor name -> shape for a configuration."""
    v = cfg.vocoder
    shapes = {}
    for name, (width, cin, cout, hidden, head) in _stack_specs(cfg).items():
        shapes[f"{name}.conv.w"] = (width * cin, cout)
        shapes[f"{name}.conv.b"] = (cout,)
        shapes[f"{name}.gru.wx"] = (3 * hidden, cout)
        shapes[f"{name}.gru.bx"] = (3 * hidden,)
        shapes[f"{name}.gru.wh"] = (3 * hidden, hidden)
        shapes[f"{name}.gru.bhn"] = (hidden,)
        if head is not None:
            shapes[f"{name}.head.w"] = (head, hidden)
            shapes[f"{name}.head.b"] = (head,)
    gru_in = v.cond_hidden + v.n_bands * v.embed_dim
    shapes["voc.gru.wx"] = (3 * v.hidden, gru_in)
    shapes["voc.gru.bx"] = (3 * v.hidden,)
    shapes["voc.gru.wh"] = (3 * v.hidden, v.hidden)
    shapes["voc.gru.bhn"] = (v.hidden,)
    shapes["voc.embed"] = (v.n_bands, v.n_bins, v.embed_dim)
    shapes["voc.bottleneck.w"] = (v.n_bands * v.bottleneck, v.hidden)
    shapes["voc.bottleneck.b"] = (v.n_bands * v.bottleneck,)
    shapes["voc.head.w"] = (v.n_bands, v.head_out, v.bottleneck)
    shapes["voc.head.b"] = (v.n_bands, v.head_out)
    shapes["voc.lp_basis"] = (v.n_bands, v.n_bins, v.n_bins)
    shapes["spk.lf0_stats"] = (cfg.spectral.n_speakers, 2)
    return shapes


# recurrent kernels that get magnitude-pruned, and which density set applies
SPARSE_SPECTRAL = ("enc_main.gru.wh", "enc_aux.gru.wh", "dec.gru.wh")
SPARSE_VOCODER = ("voc.gru.wh",)


def _tensor_generator(seed: int, name: str) -> np.random.Generator:
    key = crng.derive_key(crng.root_key(seed), crng.SITE_INIT_WEIGHTS)
    return np.random.Generator(np.random.PCG64(crng.derive_key(key, crng.tag_string(name))))


def _init_scale(name: str, shape: tuple) -> float:
    if name.endswith((".conv.b", ".gru.bx", ".gru.bhn", ".head.b", "bottleneck.b")):
        return 0.0
    if name == "voc.lp_basis":
        return 1.0 / np.sqrt(shape[-1])
    if name == "voc.embed":
        return 1.0
    fan_in = shape[-1]
    return 1.0 / np.sqrt(fan_in)


def init_random(cfg: EngineConfig, seed: int = 0, sparse: bool = True) -> WeightContainer:
    """Deterministic random weights; recurrent kernels pruned per gate when
    sparse=True."""
    tensors = {}
    for name, shape in tensor_shapes(cfg).items():
        g = _tensor_generator(seed, name)
        if name == "spk.lf0_stats":
            mu = 4.7 + 0.15 * g.standard_normal(shape[0])
            sd = np.abs(0.25 + 0.03 * g.standard_normal(shape[0])) + 0.05
            tensors[name] = np.stack([mu, sd], axis=1).astype(np.float32)
            continue
        scale = _init_scale(name, shape)
        arr = (scale * g.standard_normal(shape)).astype(np.float32)
        tensors[name] = arr
    out = WeightContainer(cfg, tensors, seed=seed)
    if sparse:
        _prune_in_place(out, cfg.spectral.rec_density, cfg.vocoder.rec_density)
    return out


def prune_gates(dense: np.ndarray, densities) -> SparseMatrix:
    """Per-gate magnitude pruning of a stacked [3H, H] recurrent kernel."""
    rows, cols = dense.shape
    if rows % 3:
        raise ValueError("stacked recurrent kernel must have 3*hidden rows")
    h = rows // 3
    kept = np.vstack([
        sparsify(dense[g * h:(g + 1) * h], float(densities[g])).to_dense()
        for g in range(3)
    ])
    return SparseMatrix.from_dense(kept)


def gate_densities(sm: SparseMatrix) -> tuple:
    """(reset, update, new, combined) kept fractions of a [3H, H] kernel."""
    h = sm.rows // 3
    counts = np.diff(sm.row_offsets)
    per = [float(np.sum(counts[g * h:(g + 1) * h])) / (h * sm.cols) for g in range(3)]
    return (*per, sm.nnz / (sm.rows * sm.cols))


def _prune_in_place(container: WeightContainer, spec_density, voc_density) -> None:
    for name in SPARSE_SPECTRAL:
        if container.has(name):
            container.put(name, prune_gates(container.tensor(name).astype(np.float32), spec_density))
    for name in SPARSE_VOCODER:
        container.put(name, prune_gates(container.tensor(name).astype(np.float32), voc_density))


def sparsify_container(container: WeightContainer,
                       spectral_density=None, vocoder_density=None) -> WeightContainer:
    """Re-prune the recurrent kernels of an existing container."""
    spec = container.config.spectral.rec_density if spectral_density is None else spectral_density
    voc = container.config.vocoder.rec_density if vocoder_density is None else vocoder_density
    if len(spec) != 3 or len(voc) != 3:
        raise ValueError("densities must be (reset, update, new) triples")
    out = WeightContainer(container.config,
                          {n: container._tensors[n] for n in container.names()},
                          seed=container.seed)
    _prune_in_place(out, spec, voc)
    return out
