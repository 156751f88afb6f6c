"""Seeded keyword-mixture corpora with controllable vocabulary overlap.

Each sentence mixes tokens from a shared pool with at least one keyword from
its class's pool, so the class signal lives in the keywords. A target corpus
can reuse a chosen fraction of each pool from a reference (source) spec,
which fixes its out-of-vocabulary count against that source.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ConfigError
from .text import Example

_ONSETS = "b c d f g h j k l m n p r s t v w z bl br cr dr fl gr kl pr st tr".split()
_VOWELS = "a e i o u ai ea oo".split()


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 2
    num_sentences: int = 1000
    sentence_length: tuple[int, int] = (8, 16)
    class_keyword_pool: int | tuple[int, ...] = 20
    shared_pool_size: int = 200
    overlap_fraction: float = 0.0
    seed: int = 0
    keyword_rate: float = 0.2
    bigrams: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.sentence_length
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.num_sentences < 1:
            raise ConfigError("num_sentences must be >= 1")
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad sentence_length range {self.sentence_length}")
        if min(self.pool_sizes) < 1 or self.shared_pool_size < 1:
            raise ConfigError("pool sizes must be >= 1")
        if not 0 <= self.overlap_fraction <= 1:
            raise ConfigError("overlap_fraction must be in [0, 1]")
        if not 0 <= self.keyword_rate <= 1:
            raise ConfigError("keyword_rate must be in [0, 1]")

    @property
    def pool_sizes(self) -> tuple[int, ...]:
        if isinstance(self.class_keyword_pool, int):
            return (self.class_keyword_pool,) * self.num_classes
        sizes = tuple(self.class_keyword_pool)
        if len(sizes) != self.num_classes:
            raise ConfigError(f"{len(sizes)} keyword pool sizes given for {self.num_classes} classes")
        return sizes


@dataclass
class SynthPools:
    class_pools: list[list[str]]
    shared: list[str]
    reused: int = 0

    @property
    def all_tokens(self) -> set[str]:
        return set(self.shared).union(*self.class_pools)


@dataclass
class _WordMaker:
    rng: np.random.Generator
    taken: set[str] = field(default_factory=set)

    def new(self) -> str:
        while True:
            n = int(self.rng.integers(2, 5))
            word = "".join(_ONSETS[self.rng.integers(len(_ONSETS))] + _VOWELS[self.rng.integers(len(_VOWELS))]
                           for _ in range(n))
            if word not in self.taken:
                self.taken.add(word)
                return word


def build_pools(spec: SynthSpec, reference: SynthSpec | None = None) -> SynthPools:
    """Keyword and shared pools; with ``reference``, reuse ``overlap_fraction`` of each pool."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    ref = build_pools(reference) if reference is not None else None
    maker = _WordMaker(rng, set(ref.all_tokens) if ref else set())
    reused = 0

    def fill(size: int, ref_pool: list[str] | None) -> list[str]:
        nonlocal reused
        take = int(round(spec.overlap_fraction * size)) if ref_pool is not None else 0
        if ref_pool is not None and take > len(ref_pool):
            raise ConfigError(f"reference pool of {len(ref_pool)} tokens cannot supply {take} reused tokens")
        pool = [ref_pool[i] for i in sorted(rng.choice(len(ref_pool), size=take, replace=False))] if take else []
        reused += take
        pool += [maker.new() for _ in range(size - take)]
        return pool

    class_pools = []
    for k, size in enumerate(spec.pool_sizes):
        class_pools.append(fill(size, ref.class_pools[k % len(ref.class_pools)] if ref else None))
    shared = fill(spec.shared_pool_size, ref.shared if ref else None)
    return SynthPools(class_pools, shared, reused)


class _Bag:
    """Draws every token of a pool once (in shuffled order) before repeating."""

    def __init__(self, pool: list[str], rng: np.random.Generator):
        self.pool, self.rng, self.queue = pool, rng, []

    def draw(self) -> tuple[int, str]:
        if not self.queue:
            self.queue = list(self.rng.permutation(len(self.pool)))
        i = int(self.queue.pop())
        return i, self.pool[i]


def generate(spec: SynthSpec, reference: SynthSpec | None = None) -> list[Example]:
    """Labelled dataset fully determined by ``spec`` (and ``reference``)."""
    pools = build_pools(spec, reference)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    bags = [_Bag(p, rng) for p in pools.class_pools]
    shared = _Bag(pools.shared, rng)
    labels = rng.permutation(np.arange(spec.num_sentences) % spec.num_classes)
    lo, hi = spec.sentence_length
    out = []
    for y in labels:
        length = int(rng.integers(lo, hi + 1))
        n_kw = max(1, int(rng.binomial(length, spec.keyword_rate)))
        n_kw = min(n_kw, length)
        tokens = [shared.draw()[1] for _ in range(length - n_kw)]
        for _ in range(n_kw):
            i, kw = bags[y].draw()
            unit = [kw]
            if spec.bigrams:
                pool = pools.class_pools[y]
                unit.append(pool[(i + 1) % len(pool)])
            pos = int(rng.integers(len(tokens) + 1))
            tokens[pos:pos] = unit
        out.append(Example(int(y), tuple(tokens)))
    return out
