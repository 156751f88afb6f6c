import numpy as np
import pytest

from textcnn_transfer.corpus import oov_count
from textcnn_transfer.model import init_random
from textcnn_transfer.nn import ConfigError
from textcnn_transfer.synth import SynthSpec, build_pools, generate
from textcnn_transfer.text import build_vocab
from textcnn_transfer.trainer import TrainConfig, evaluate, train

from .conftest import TINY, encoded

SOURCE = SynthSpec(num_sentences=400, class_keyword_pool=10, shared_pool_size=60, seed=1)


def _vocab(examples):
    return build_vocab(ex.tokens for ex in examples)


class TestGenerate:
    def test_deterministic(self):
        assert generate(SOURCE) == generate(SOURCE)
        assert generate(SOURCE) != generate(SynthSpec(num_sentences=400, class_keyword_pool=10,
                                                      shared_pool_size=60, seed=2))

    def test_shape(self):
        data = generate(SynthSpec(num_classes=3, num_sentences=99, sentence_length=(5, 7), seed=0))
        assert len(data) == 99
        assert np.bincount([ex.label for ex in data]).tolist() == [33, 33, 33]
        assert all(5 <= len(ex.tokens) <= 7 for ex in data)

    def test_every_sentence_has_a_class_keyword(self):
        spec = SynthSpec(num_sentences=200, keyword_rate=0.0, seed=4)
        pools = build_pools(spec)
        for ex in generate(spec):
            assert set(ex.tokens) & set(pools.class_pools[ex.label])

    def test_bigrams(self):
        spec = SynthSpec(num_sentences=50, bigrams=True, seed=4)
        pools = build_pools(spec)
        for ex in generate(spec):
            pool = pools.class_pools[ex.label]
            hits = [i for i, t in enumerate(ex.tokens[:-1]) if t in pool]
            assert any(ex.tokens[i + 1] == pool[(pool.index(ex.tokens[i]) + 1) % len(pool)] for i in hits)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            SynthSpec(overlap_fraction=1.5)
        with pytest.raises(ConfigError):
            SynthSpec(num_classes=3, class_keyword_pool=(1, 2))


class TestOverlap:
    def _target(self, overlap):
        spec = SynthSpec(num_sentences=400, class_keyword_pool=10, shared_pool_size=60, seed=9,
                         overlap_fraction=overlap)
        return generate(spec, SOURCE)

    def test_full_overlap_no_oov(self):
        assert oov_count(_vocab(self._target(1.0)), _vocab(generate(SOURCE))) == 0

    def test_zero_overlap_all_oov(self):
        target = _vocab(self._target(0.0))
        assert oov_count(target, _vocab(generate(SOURCE))) == len(target)

    def test_partial_overlap_count(self):
        # bag cycling uses every pool token, so vocabularies equal the pools
        target = _vocab(self._target(0.7))
        assert oov_count(target, _vocab(generate(SOURCE))) == 80 - 56

    def test_reference_pool_too_small(self):
        spec = SynthSpec(class_keyword_pool=30, overlap_fraction=1.0)
        with pytest.raises(ConfigError):
            build_pools(spec, SynthSpec(class_keyword_pool=10))


def test_learnable():
    data = generate(SynthSpec(num_sentences=1000, class_keyword_pool=20, shared_pool_size=200, seed=0))
    vocab = _vocab(data)
    enc = encoded(data, vocab)
    model = init_random(TINY, vocab, np.random.default_rng(0))
    train(model, enc[:900], TrainConfig(epochs=10, seed=0))
    assert evaluate(model, enc[900:]) >= 0.9
