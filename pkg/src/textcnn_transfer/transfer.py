"""Checkpoint I/O and building target models from a source under an ECHO plan.

Checkpoint layout (all integers unsigned 32-bit little-endian, every
length-prefixed string UTF-8)::

    b"ECHO" | version | len+config JSON | len+provenance
    | word count | (len+word)*            vocabulary in index order, from 2
    | tensor count | (len+name | rank | dims* | float32 LE values)*
    | CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CnnModel, ModelConfig, init_random
from .nn import ParamTensor
from .plan import LAYERS, LayerId, LayerMode, TransferPlan
from .text import EMBED_INIT_RANGE, PAD, UNK, EmbeddingTable, Vocabulary, embedding_table

MAGIC = b"ECHO"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


class TransferError(ValueError):
    pass


class ClassCountMismatch(TransferError):
    pass


class StructureMismatch(TransferError):
    pass


class CheckpointError(ValueError):
    pass


class IntegrityError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


@dataclass(eq=False)
class Checkpoint:
    config: ModelConfig
    vocabulary: Vocabulary
    tensors: dict[str, list[tuple[str, tuple[int, ...], np.ndarray]]]
    provenance: str = ""
    format_version: int = FORMAT_VERSION

    def tensor(self, layer: LayerId | str, name: str) -> np.ndarray:
        for n, _, values in self.tensors[LayerId(layer).value]:
            if n == name:
                return values
        raise KeyError(f"{LayerId(layer).value}/{name}")


def checkpoint_from_model(model: CnnModel, vocab: Vocabulary, provenance: str = "") -> Checkpoint:
    if model.embeddings.matrix.shape[0] != vocab.num_rows:
        raise StructureMismatch("embedding rows do not match the vocabulary")
    tensors = {}
    for layer in LAYERS:
        tensors[layer.value] = [(name, p.shape, p.value.astype("<f4")) for name, p in model.layer_params(layer)]
    return Checkpoint(model.config, vocab, tensors, provenance)


def _put_str(buf: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    buf += _U32.pack(len(raw))
    buf += raw


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    buf = bytearray(MAGIC)
    buf += _U32.pack(ckpt.format_version)
    _put_str(buf, json.dumps(ckpt.config.to_dict(), sort_keys=True, separators=(",", ":")))
    _put_str(buf, ckpt.provenance)
    buf += _U32.pack(len(ckpt.vocabulary.words))
    for w in ckpt.vocabulary.words:
        _put_str(buf, w)
    records = [(f"{layer}/{name}", shape, values) for layer in (l.value for l in LAYERS)
               for name, shape, values in ckpt.tensors[layer]]
    buf += _U32.pack(len(records))
    for name, shape, values in records:
        values = np.ascontiguousarray(values, dtype="<f4")
        if not np.all(np.isfinite(values)):
            raise IntegrityError(f"tensor {name} holds non-finite values")
        _put_str(buf, name)
        buf += _U32.pack(len(shape))
        for dim in shape:
            buf += _U32.pack(dim)
        buf += values.tobytes()
    buf += _U32.pack(zlib.crc32(buf))
    return bytes(buf)


def write_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    data = checkpoint_bytes(ckpt)
    Path(path).write_bytes(data)


def save_checkpoint(model: CnnModel, vocab: Vocabulary, path: str | Path, provenance: str = "") -> None:
    write_checkpoint(checkpoint_from_model(model, vocab, provenance), path)


class _Reader:
    def __init__(self, data: bytes, start: int, end: int):
        self.data, self.pos, self.end = data, start, end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise IntegrityError("checkpoint ends unexpectedly")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def text(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IntegrityError(f"invalid UTF-8 in checkpoint: {exc}") from None


def parse_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 8 or data[:4] != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic or truncated)")
    body_end = len(data) - 4
    if zlib.crc32(data[:body_end]) != _U32.unpack(data[body_end:])[0]:
        raise IntegrityError("checkpoint CRC mismatch (corrupt or truncated file)")
    r = _Reader(data, 4, body_end)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    try:
        config = ModelConfig.from_dict(json.loads(r.text()))
    except (ValueError, TypeError) as exc:
        raise IntegrityError(f"bad config block: {exc}") from None
    provenance = r.text()
    try:
        vocab = Vocabulary([r.text() for _ in range(r.u32())])
    except IntegrityError:
        raise
    except ValueError as exc:
        raise IntegrityError(f"bad vocabulary block: {exc}") from None
    tensors: dict[str, list] = {layer.value: [] for layer in LAYERS}
    for _ in range(r.u32()):
        full = r.text()
        layer, _, name = full.partition("/")
        if layer not in tensors:
            raise IntegrityError(f"tensor {full!r} has no known layer prefix")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).copy()
        tensors[layer].append((name, shape, values))
    if r.pos != body_end:
        raise IntegrityError("trailing bytes after tensor records")
    ckpt = Checkpoint(config, vocab, tensors, provenance, version)
    _check_shapes(ckpt)
    return ckpt


def load_checkpoint(path: str | Path) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes())


def _expected_shapes(config: ModelConfig, rows: int) -> dict[str, list[tuple[str, tuple[int, ...]]]]:
    F = config.feature_maps
    conv = []
    for h in config.region_sizes:
        conv += [(f"filters.{h}", (F, h, config.d)), (f"bias.{h}", (F,))]
    return {
        "E": [("embeddings", (rows, config.d))],
        "C": conv,
        "H": [("weight", (config.hidden_units, config.pooled_size)), ("bias", (config.hidden_units,))],
        "O": [("weight", (config.num_classes, config.hidden_units)), ("bias", (config.num_classes,))],
    }


def _check_shapes(ckpt: Checkpoint) -> None:
    expected = _expected_shapes(ckpt.config, ckpt.vocabulary.num_rows)
    for layer, records in expected.items():
        got = [(n, tuple(s)) for n, s, _ in ckpt.tensors.get(layer, [])]
        if got != records:
            raise IntegrityError(f"layer {layer} tensors {got} inconsistent with config {records}")


def model_from_checkpoint(ckpt: Checkpoint, dtype=np.float32) -> CnnModel:
    """Rebuild the trained model exactly as stored (all layers trainable)."""
    dtype = np.dtype(dtype)
    E = ckpt.tensor("E", "embeddings").astype(dtype)
    covered = np.ones(ckpt.vocabulary.num_rows, dtype=bool)
    covered[PAD] = False
    emb = embedding_table(E, covered, ckpt.provenance or "checkpoint")
    conv = [(ParamTensor(ckpt.tensor("C", f"filters.{h}").astype(dtype)),
             ParamTensor(ckpt.tensor("C", f"bias.{h}").astype(dtype))) for h in ckpt.config.region_sizes]
    hidden = tuple(ParamTensor(ckpt.tensor("H", n).astype(dtype)) for n in ("weight", "bias"))
    output = tuple(ParamTensor(ckpt.tensor("O", n).astype(dtype)) for n in ("weight", "bias"))
    return CnnModel(ckpt.config, emb, conv, hidden, output)


def align_embeddings(source: Checkpoint, target_vocab: Vocabulary, rng: np.random.Generator,
                     d: int | None = None, dtype=np.float32) -> EmbeddingTable:
    """Target embedding table seeded from the source's trained rows.

    Target words known to the source (and UNK) copy the source row; the rest
    are drawn from U(-0.25, 0.25); PAD is zero. ``table.covered`` marks the
    copied rows.
    """
    src_d = source.config.d
    if d is not None and d != src_d:
        raise StructureMismatch(f"source embedding dimension {src_d} differs from target d={d}")
    src = source.tensor("E", "embeddings")
    values = rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(target_vocab.num_rows, src_d)).astype(dtype)
    covered = np.zeros(target_vocab.num_rows, dtype=bool)
    src_index = source.vocabulary.index
    for word, row in target_vocab.index.items():
        src_row = src_index.get(word)
        if src_row is not None:
            values[row] = src[src_row]
            covered[row] = True
    values[UNK] = src[UNK]
    covered[UNK] = True
    return embedding_table(values, covered, f"transferred:{source.provenance or 'checkpoint'}")


def validate_plan(source: ModelConfig, target: ModelConfig, plan: TransferPlan) -> None:
    """Raise if ``plan`` cannot be realized between the two configs."""
    if plan.o.transferred and source.num_classes != target.num_classes:
        raise ClassCountMismatch(
            f"cannot transfer the O layer from a {source.num_classes}-class source to a {target.num_classes}-class target")
    if plan.e.transferred and source.d != target.d:
        raise StructureMismatch(f"embedding dimension differs: source d={source.d}, target d={target.d}")
    keys = ()
    if plan.c.transferred or plan.h.transferred:
        keys = ("d", "region_sizes", "feature_maps", "hidden_units")
    elif plan.o.transferred:
        keys = ("hidden_units",)
    for key in keys:
        if getattr(source, key) != getattr(target, key):
            raise StructureMismatch(
                f"{key} differs between source ({getattr(source, key)}) and target ({getattr(target, key)})")


def build_transfer_model(source: Checkpoint, target_vocab: Vocabulary, target_config: ModelConfig,
                         plan: TransferPlan, rng: np.random.Generator, dtype=np.float32,
                         train_uncovered: bool = False) -> CnnModel:
    """Target model whose layers are fresh, frozen copies or fine-tunable copies.

    The fresh model is drawn first, so an all-fresh plan reproduces
    :func:`init_random` for the same generator. With ``train_uncovered`` a
    frozen E layer still trains the rows the source did not provide.
    """
    validate_plan(source.config, target_config, plan)
    if plan.h.transferred and source.config.num_classes != target_config.num_classes:
        warnings.warn("transferring the H layer between tasks with different class counts", stacklevel=2)
    dtype = np.dtype(dtype)
    model = init_random(target_config, target_vocab, rng, dtype=dtype)

    if plan.e.transferred:
        emb = align_embeddings(source, target_vocab, rng, target_config.d, dtype)
        if plan.e is LayerMode.FROZEN and train_uncovered:
            mask = ~emb.covered
            mask[PAD] = False
            emb.matrix.row_mask = mask
        else:
            emb.matrix.trainable = plan.e.trainable
        model.embeddings = emb
    if plan.c.transferred:
        for h, (filt, bias) in zip(target_config.region_sizes, model.conv):
            filt.value[...] = source.tensor("C", f"filters.{h}")
            bias.value[...] = source.tensor("C", f"bias.{h}")
    for layer, pair in ((LayerId.H, model.hidden), (LayerId.O, model.output)):
        if plan.mode(layer).transferred:
            pair[0].value[...] = source.tensor(layer, "weight")
            pair[1].value[...] = source.tensor(layer, "bias")
    for layer in (LayerId.C, LayerId.H, LayerId.O):
        model.set_layer_trainable(layer, plan.mode(layer).trainable)
    return model

