"""Dataset statistics, out-of-vocabulary counts and source ranking."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .text import Example, Vocabulary, build_vocab, load_pretrained_vectors

# Weights of (vocabulary overlap, log vocab size, log corpus size, class match).
DEFAULT_WEIGHTS = (0.4, 0.25, 0.25, 0.1)


class DomainRole(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class DatasetStats:
    domain_role: DomainRole
    num_classes: int
    avg_length: float
    num_sentences: int
    vocab_size: int
    pretrained_covered: int | None = None


def compute_stats(dataset: Sequence[Example], role: DomainRole | str = DomainRole.TARGET,
                  vectors: str | Path | None = None) -> DatasetStats:
    """Class count, mean token count (after tokenization), size and vocabulary size.

    ``pretrained_covered`` is only filled when a word-vector file is given.
    """
    if not dataset:
        raise ValueError("cannot compute statistics of an empty dataset")
    vocab = build_vocab(ex.tokens for ex in dataset)
    covered = None
    if vectors is not None:
        _, covered = load_pretrained_vectors(vectors, vocab, np.random.default_rng(0))
    return DatasetStats(
        domain_role=DomainRole(role),
        num_classes=len({ex.label for ex in dataset}),
        avg_length=float(np.mean([len(ex.tokens) for ex in dataset])),
        num_sentences=len(dataset),
        vocab_size=len(vocab),
        pretrained_covered=covered,
    )


def oov_count(target_vocab: Vocabulary, source_vocab: Vocabulary) -> int:
    """Number of target vocabulary words missing from the source vocabulary."""
    return sum(1 for w in target_vocab.words if w not in source_vocab)


@dataclass(frozen=True)
class SourceScore:
    source_id: str
    oov: int
    vocab_size: int
    num_sentences: int
    class_match: bool
    score: float
    rank: int


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rank_sources(target_stats: DatasetStats, target_vocab: Vocabulary,
                 candidates: Sequence[tuple[str, DatasetStats, Vocabulary | int]],
                 weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS) -> list[SourceScore]:
    """Heuristic ranking of candidate source datasets for one target.

    Favors low OOV, large vocabularies, large corpora and matching class
    counts. A candidate's third element may be its vocabulary or an already
    known OOV count. Vocabulary and corpus sizes are min-max normalized on a
    log scale across the candidates.
    """
    if not candidates:
        raise ValueError("no candidate sources")
    v_target = max(len(target_vocab), target_stats.vocab_size, 1)
    oovs = [c if isinstance(c, int) else oov_count(target_vocab, c) for _, _, c in candidates]
    vsize = _minmax([math.log(max(s.vocab_size, 1)) for _, s, _ in candidates])
    nsize = _minmax([math.log(max(s.num_sentences, 1)) for _, s, _ in candidates])
    w_oov, w_v, w_n, w_c = weights
    rows = []
    for (cid, stats, _), oov, v, n in zip(candidates, oovs, vsize, nsize):
        match = stats.num_classes == target_stats.num_classes
        score = w_oov * (1 - oov / v_target) + w_v * v + w_n * n + w_c * float(match)
        rows.append((cid, oov, stats, match, score))
    rows.sort(key=lambda r: (-r[4], r[0]))
    return [SourceScore(cid, oov, s.vocab_size, s.num_sentences, match, score, rank)
            for rank, (cid, oov, s, match, score) in enumerate(rows, 1)]
