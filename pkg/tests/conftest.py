import numpy as np
import pytest

from textcnn_transfer.model import ModelConfig
from textcnn_transfer.synth import SynthSpec, generate
from textcnn_transfer.text import build_vocab, encode_dataset

TINY = ModelConfig(d=32, region_sizes=(2, 3), feature_maps=16, hidden_units=32)


def encoded(examples, vocab, config=TINY):
    return encode_dataset(examples, vocab, config.max_len, config.min_len)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture(scope="session")
def synth_small():
    examples = generate(SynthSpec(num_sentences=120, class_keyword_pool=8, shared_pool_size=40, seed=5))
    vocab = build_vocab(ex.tokens for ex in examples)
    return examples, vocab


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
