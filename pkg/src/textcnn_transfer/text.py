"""Tokenization, vocabularies, word-vector loading and sentence encoding."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .nn import ConfigError, ParamTensor

PAD = 0
UNK = 1
RESERVED = 2
EMBED_INIT_RANGE = 0.25

_TOKEN_RE = re.compile(r"""[.,!?'"()]|[^\s.,!?'"()]+""")


class DatasetFormatError(ValueError):
    pass


class VectorFileError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach ``. , ! ? ' " ( )``."""
    return _TOKEN_RE.findall(text.lower())


class Example(NamedTuple):
    label: int
    tokens: tuple[str, ...]


def read_dataset(path: str | Path) -> list[Example]:
    """Read ``<label><TAB><text>`` lines."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise DatasetFormatError(f"{path}:{lineno}: expected '<label>\\t<text>'")
            try:
                y = int(label)
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: label {label!r} is not an integer") from None
            if y < 0:
                raise DatasetFormatError(f"{path}:{lineno}: negative label {y}")
            examples.append(Example(y, tuple(tokenize(text))))
    if not examples:
        raise DatasetFormatError(f"{path}: no examples")
    return examples


def format_dataset(examples: Iterable[Example]) -> str:
    return "".join(f"{ex.label}\t{' '.join(ex.tokens)}\n" for ex in examples)


def write_dataset(examples: Iterable[Example], path: str | Path) -> None:
    Path(path).write_text(format_dataset(examples), encoding="utf-8")


@dataclass
class Vocabulary:
    """Ordered word list; word ``words[i]`` has index ``i + 2`` (0 = PAD, 1 = UNK)."""

    words: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.words = list(self.words)
        self.index = {w: i + RESERVED for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("vocabulary words must be distinct")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: object) -> bool:
        return word in self.index

    def id_of(self, word: str) -> int:
        return self.index.get(word, UNK)

    @property
    def num_rows(self) -> int:
        return len(self.words) + RESERVED


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Words with frequency >= ``min_count``, ordered by (frequency desc, word asc)."""
    if min_count < 1:
        raise ConfigError("min_count must be >= 1")
    counts = Counter(tok for sent in corpus for tok in sent)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary(kept)


@dataclass(eq=False)
class EmbeddingTable:
    """The E layer: ``(V + 2) x d`` matrix whose PAD row is pinned at zero.

    ``covered`` marks rows copied from an outside source (pretrained vectors
    or a transferred checkpoint) rather than randomly initialized.
    """

    matrix: ParamTensor
    source_tag: str = "random"
    covered: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_covered(self) -> int:
        if self.covered is None:
            return 0
        return int(self.covered[RESERVED:].sum())


def _pad_mask(rows: int) -> np.ndarray:
    mask = np.ones(rows, dtype=bool)
    mask[PAD] = False
    return mask


def random_embeddings(vocab: Vocabulary, d: int, rng: np.random.Generator,
                      dtype=np.float32) -> EmbeddingTable:
    values = rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(vocab.num_rows, d)).astype(dtype)
    values[PAD] = 0
    return EmbeddingTable(ParamTensor(values, row_mask=_pad_mask(vocab.num_rows)), "random",
                          np.zeros(vocab.num_rows, dtype=bool))


def embedding_table(values: np.ndarray, covered: np.ndarray, source_tag: str) -> EmbeddingTable:
    values = np.array(values, copy=True)
    values[PAD] = 0
    return EmbeddingTable(ParamTensor(values, row_mask=_pad_mask(values.shape[0])), source_tag, covered)


def load_pretrained_vectors(path: str | Path, vocab: Vocabulary, rng: np.random.Generator,
                            d: int | None = None, dtype=np.float32) -> tuple[EmbeddingTable, int]:
    """Load a text-format word-vector file for ``vocab``.

    Returns the table and the number of vocabulary words found in the file.
    Words absent from the file (and UNK) get U(-0.25, 0.25) rows.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise VectorFileError(f"{path}:1: malformed header {header.rstrip()!r}; expected '<count> <dim>'")
        count, dim = int(parts[0]), int(parts[1])
        if d is not None and dim != d:
            raise ConfigError(f"{path}: vector dimension {dim} does not match configured d={d}")
        table = random_embeddings(vocab, dim, rng, dtype)
        values = table.matrix.value
        covered = np.zeros(vocab.num_rows, dtype=bool)
        seen = 0
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise VectorFileError(f"{path}:{lineno}: expected a word and {dim} values, got {len(fields) - 1}")
            try:
                vec = np.array([float(v) for v in fields[1:]])
            except ValueError:
                raise VectorFileError(f"{path}:{lineno}: non-numeric vector value") from None
            seen += 1
            row = vocab.index.get(fields[0])
            if row is not None and not covered[row]:
                values[row] = vec
                covered[row] = True
        if seen != count:
            raise VectorFileError(f"{path}: header announces {count} vectors but file has {seen}")
    table.covered = covered
    table.source_tag = f"pretrained:{Path(path).name}"
    return table, int(covered.sum())


@dataclass
class EncodedSentence:
    token_ids: np.ndarray
    true_length: int
    label: int = 0


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int, min_len: int, label: int = 0) -> EncodedSentence:
    """Map tokens to ids, truncate to ``max_len`` and right-pad to ``min_len``."""
    if max_len < min_len:
        raise ConfigError(f"max_len {max_len} < min_len {min_len}")
    ids = [vocab.id_of(t) for t in tokens[:max_len]] or [UNK]
    n = len(ids)
    out = np.zeros(max(min_len, n), dtype=np.int64)
    out[:n] = ids
    return EncodedSentence(out, n, int(label))


def encode_dataset(examples: Iterable[Example], vocab: Vocabulary, max_len: int, min_len: int) -> list[EncodedSentence]:
    return [encode(ex.tokens, vocab, max_len, min_len, ex.label) for ex in examples]
