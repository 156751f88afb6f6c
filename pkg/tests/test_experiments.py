import numpy as np
import pytest

from textcnn_transfer.experiments import (TransferPair, run_activation_sweep, run_dropout_sweep, run_matrix,
                                          train_from_scratch, with_activation)
from textcnn_transfer.nn import Activation
from textcnn_transfer.plan import DEFAULT_SETTINGS, TransferPlan
from textcnn_transfer.synth import SynthSpec, generate
from textcnn_transfer.trainer import TrainConfig
from textcnn_transfer.transfer import StructureMismatch, checkpoint_from_model

from .conftest import TINY

FAST = TrainConfig(epochs=1, folds=2, repetitions=1, seed=0)
SRC2 = SynthSpec(num_sentences=200, class_keyword_pool=8, shared_pool_size=40, seed=1)
SRC5 = SynthSpec(num_classes=5, num_sentences=200, class_keyword_pool=8, shared_pool_size=40, seed=2)
TGT = SynthSpec(num_sentences=40, class_keyword_pool=8, shared_pool_size=40, seed=3, overlap_fraction=0.5)


def _pair(spec, name):
    data = generate(spec)
    model, vocab = train_from_scratch(data, TINY.replace(num_classes=spec.num_classes), FAST)
    return TransferPair(name, checkpoint_from_model(model, vocab, name), "T", generate(TGT, SRC2))


@pytest.fixture(scope="module")
def pairs():
    return [_pair(SRC2, "S2"), _pair(SRC5, "S5")]


@pytest.mark.filterwarnings("ignore:transferring the H layer")
def test_matrix_layout(pairs):
    res = run_matrix(pairs, DEFAULT_SETTINGS, FAST, include_baseline=True)
    t = res.table
    assert t.col_labels == ["S2 ↠ T", "S5 ↠ T"]
    assert t.row_labels[-1] == "E★C★H★O★" and len(t.row_labels) == 9
    o_rows = {i for i, p in enumerate(res.settings) if p.o.transferred}
    for i, row in enumerate(t.cells):
        assert isinstance(row[0], float)
        assert (row[1] is None) == (i in o_rows)


def test_matrix_structure_error_before_training(pairs):
    with pytest.raises(StructureMismatch):
        run_matrix(pairs[:1], [TransferPlan.parse("EUCUH*O*")], FAST, feature_maps=4)


def test_dropout_sweep(pairs):
    t = run_dropout_sweep(pairs[:1], [0.0, 0.5], FAST)
    assert t.row_labels == ["0.0", "0.5"] and all(isinstance(r[0], float) for r in t.cells)
    with pytest.raises(ValueError):
        run_dropout_sweep(pairs[:1], [1.0], FAST)


def test_activation_sweep():
    t = run_activation_sweep("S", generate(SRC2), "T", generate(TGT, SRC2), TINY, ["Iden", "ReLU"], ["Tanh"], FAST)
    assert t.row_labels == ["S-Iden", "S-ReLU"] and t.col_labels == ["T-Tanh"]
    assert all(isinstance(r[0], tuple) and len(r[0]) == 2 for r in t.cells)


def test_with_activation():
    cfg = with_activation(TINY, "tanh")
    assert cfg.conv_activation is cfg.hidden_activation is Activation.TANH
