"""Training configuration and the on-disk checkpoint container.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic  b"DOCNADE\\x00"
    u32       format version (currently 1)
    u64       header length n
    n bytes   UTF-8 JSON header: config, vocabulary, fingerprint, dims
    u32       array count
    per array:
        u16   name length, then the ASCII name
        u8    dtype code: 'f' = float64, 'i' = int64
        u32   ndim, then ndim x u64 dimensions
        data  row-major, little-endian 8-byte values

Arrays: W (H x K), U (T x H or K x H), b_fwd, b_bwd, c_fwd, c_bwd and, for
tree output, tree_depth (K), tree_nodes and tree_bits (K x max_depth).
Training metadata (pass count, dev history) lives in a JSON sidecar at
``<path>.meta.json``.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from docnade.corpus import Vocabulary
from docnade.hsoftmax import WordTree
from docnade.model import ACTIVATIONS, MODEL_KINDS, OBJECTIVES, OUTPUT_KINDS, ModelParams

MAGIC = b"DOCNADE\x00"
FORMAT_VERSION = 1
PARAM_ARRAYS = ("W", "U", "b_fwd", "b_bwd", "c_fwd", "c_bwd")


class CheckpointError(ValueError):
    pass


class VocabularyMismatch(CheckpointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    hidden_size: int = 50
    passes: int = 100
    activation: str = "sigmoid"
    scaling: bool = False
    seed: int = 0
    model_kind: str = "idocnade"
    output_kind: str = "tree"
    objective: str = "exact"
    selection_metric: str = "dev_ppl"
    init_scale: float = 1.0
    eval_every: int = 100
    ir_fraction: float = 0.02
    include_all_words: bool = False

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.passes < 0:
            raise ValueError("passes must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        for name, allowed in (("activation", ACTIVATIONS), ("model_kind", MODEL_KINDS),
                              ("output_kind", OUTPUT_KINDS), ("objective", OBJECTIVES),
                              ("selection_metric", ("dev_ppl", "dev_ir_precision"))):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    vocab: Vocabulary
    metadata: dict = field(default_factory=dict)

    @property
    def model_kind(self) -> str:
        return self.config.model_kind

    @property
    def tree(self) -> WordTree | None:
        return self.params.tree

    @property
    def vocab_fingerprint(self) -> str:
        return self.vocab.fingerprint()

    def check_vocab(self, vocab: Vocabulary):
        if vocab.fingerprint() != self.vocab_fingerprint:
            raise VocabularyMismatch(
                f"vocabulary fingerprint {vocab.fingerprint()[:12]} does not match "
                f"checkpoint vocabulary {self.vocab_fingerprint[:12]}"
            )


def _write_array(buf, name: str, arr: np.ndarray):
    if arr.dtype.kind == "f":
        code, data = b"f", np.ascontiguousarray(arr, dtype="<f8")
    else:
        code, data = b"i", np.ascontiguousarray(arr, dtype="<i8")
    raw_name = name.encode("ascii")
    buf.write(struct.pack("<H", len(raw_name)))
    buf.write(raw_name)
    buf.write(code)
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(data.tobytes())


def _read_array(buf) -> tuple[str, np.ndarray]:
    (n,) = struct.unpack("<H", buf.read(2))
    name = buf.read(n).decode("ascii")
    code = buf.read(1)
    (ndim,) = struct.unpack("<I", buf.read(4))
    shape = struct.unpack(f"<{ndim}Q", buf.read(8 * ndim))
    dtype = {b"f": "<f8", b"i": "<i8"}.get(code)
    if dtype is None:
        raise CheckpointError(f"bad dtype code in array {name!r}")
    count = int(np.prod(shape)) if ndim else 1
    raw = buf.read(8 * count)
    if len(raw) != 8 * count:
        raise CheckpointError(f"truncated array {name!r}")
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return name, arr.astype(np.float64 if code == b"f" else np.int64)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    header = {
        "config": ckpt.config.to_dict(),
        "vocab": list(ckpt.vocab.id_to_token),
        "vocab_fingerprint": ckpt.vocab_fingerprint,
        "K": p.K,
        "H": p.H,
        "output_kind": p.output_kind,
        "scaling": p.scaling,
        "activation": p.activation,
        "tree_seed": p.tree.seed if p.tree is not None else None,
    }
    arrays = [(name, getattr(p, name)) for name in PARAM_ARRAYS]
    if p.tree is not None:
        arrays += [("tree_depth", p.tree.depth), ("tree_nodes", p.tree.nodes), ("tree_bits", p.tree.bits)]
    buf = io.BytesIO()
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(raw_header)))
    buf.write(raw_header)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        _write_array(buf, name, np.asarray(arr))
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(ckpt))
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(ckpt.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    buf = io.BytesIO(path.read_bytes())
    if buf.read(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, n = struct.unpack("<IQ", buf.read(12))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(buf.read(n).decode("utf-8"))
    (count,) = struct.unpack("<I", buf.read(4))
    arrays = dict(_read_array(buf) for _ in range(count))
    tree = None
    if header["output_kind"] == "tree":
        tree = WordTree.from_arrays(header["K"], header["tree_seed"], arrays["tree_depth"],
                                    arrays["tree_nodes"], arrays["tree_bits"])
    params = ModelParams(*(arrays[name] for name in PARAM_ARRAYS), output_kind=header["output_kind"],
                         scaling=header["scaling"], activation=header["activation"], tree=tree)
    vocab = Vocabulary(tuple(header["vocab"]))
    if vocab.fingerprint() != header["vocab_fingerprint"]:
        raise CheckpointError(f"{path}: embedded vocabulary is corrupt")
    meta_path = path.with_name(path.name + ".meta.json")
    metadata = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else {}
    return Checkpoint(params, TrainConfig.from_dict(header["config"]), vocab, metadata)
