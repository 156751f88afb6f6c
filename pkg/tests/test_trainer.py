import math

import numpy as np
import pytest

from textcnn_transfer.model import init_random
from textcnn_transfer.nn import ConfigError, FreezeViolation, ParamTensor
from textcnn_transfer.synth import SynthSpec, generate
from textcnn_transfer.text import build_vocab
from textcnn_transfer.trainer import (NonFiniteLossError, TrainConfig, adadelta_step, apply_l2_cap,
                                      cross_validate, cv_splits, evaluate, repetition_seed, train)

from .conftest import TINY, encoded
from .oracles import adadelta_reference


def _snapshot(model):
    return {n: p.value.tobytes() for n, p in model.named_params()}


class TestAdadelta:
    def test_closed_form_single_step(self):
        p = ParamTensor(np.array([0.0]))
        p.grad[:] = 1.0
        adadelta_step(p, rho=0.9, epsilon=1e-6)
        assert p.acc_grad_sq[0] == pytest.approx(0.1, rel=1e-15)
        assert p.value[0] == pytest.approx(-math.sqrt(1e-6 / 0.100001), rel=1e-12)
        assert f"{p.value[0]:.4e}" == "-3.1623e-03"

    def test_zero_gradient_changes_nothing(self):
        p = ParamTensor(np.arange(4.0))
        adadelta_step(p, 0.95, 1e-6)
        np.testing.assert_array_equal(p.value, np.arange(4.0))
        assert not p.acc_grad_sq.any() and not p.acc_update_sq.any()

    def test_matches_reference_over_steps(self, rng):
        p = ParamTensor(rng.normal(size=(3, 4)))
        value, ag, au = p.value.copy(), np.zeros((3, 4)), np.zeros((3, 4))
        for _ in range(5):
            g = rng.normal(size=(3, 4))
            p.grad[:] = g
            adadelta_step(p, 0.95, 1e-6)
            value, ag, au = adadelta_reference(value, g, ag, au, 0.95, 1e-6)
        np.testing.assert_allclose(p.value, value, rtol=1e-12)
        np.testing.assert_allclose(p.acc_update_sq, au, rtol=1e-12)
        assert not p.grad.any()

    def test_identical_inputs_identical_outputs(self):
        a, b = ParamTensor(np.ones(3)), ParamTensor(np.ones(3))
        for p in (a, b):
            for _ in range(2):
                p.grad[:] = [0.5, -1, 2]
                adadelta_step(p, 0.9, 1e-6)
        assert a.value.tobytes() == b.value.tobytes()

    def test_frozen_raises(self):
        with pytest.raises(FreezeViolation):
            adadelta_step(ParamTensor(np.ones(2), trainable=False), 0.95, 1e-6)

    def test_masked_rows_do_not_move(self):
        p = ParamTensor(np.ones((2, 2)), row_mask=np.array([False, True]))
        p.grad[:] = 1.0
        adadelta_step(p, 0.95, 1e-6)
        np.testing.assert_array_equal(p.value[0], [1, 1])
        assert (p.value[1] < 1).all()


class TestL2Cap:
    def test_rescales(self):
        W = ParamTensor(np.array([[3.0, 4.0]]))
        apply_l2_cap(W, 3)
        np.testing.assert_allclose(W.value, [[1.8, 2.4]])
        assert np.linalg.norm(W.value) == pytest.approx(3)

    def test_under_cap_and_zero_rows(self):
        row = np.array([2.9, 0.0])
        W = ParamTensor(np.array([row, [0.0, 0.0]]))
        apply_l2_cap(W, 3)
        np.testing.assert_array_equal(W.value, [row, [0, 0]])


@pytest.fixture(scope="module")
def easy():
    examples = generate(SynthSpec(num_sentences=200, class_keyword_pool=6, shared_pool_size=30, seed=3))
    vocab = build_vocab(ex.tokens for ex in examples)
    return encoded(examples, vocab), vocab


class TestTrain:
    def test_zero_epochs_is_noop(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        before = _snapshot(m)
        train(m, data, TrainConfig(epochs=0))
        assert _snapshot(m) == before

    def test_all_frozen_is_noop(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        for layer in "ECHO":
            m.set_layer_trainable(layer, False)
        before = _snapshot(m)
        train(m, data, TrainConfig(epochs=2))
        assert _snapshot(m) == before

    def test_fits_separable_data(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        train(m, data[:40], TrainConfig(epochs=50, seed=0))
        assert evaluate(m, data[:40]) >= 0.95

    def test_deterministic(self, easy):
        data, v = easy
        runs = []
        for _ in range(2):
            m = init_random(TINY, v, np.random.default_rng(0))
            train(m, data, TrainConfig(epochs=2, seed=4))
            runs.append(_snapshot(m))
        assert runs[0] == runs[1]

    def test_max_norm_holds_after_training(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        train(m, data, TrainConfig(epochs=3, l2_cap=0.5))
        for W in (m.hidden[0].value, m.output[0].value):
            assert np.linalg.norm(W, axis=1).max() <= 0.5 + 1e-6

    def test_callback_sees_every_step(self, easy):
        data, v = easy
        seen = []
        m = init_random(TINY, v, np.random.default_rng(0))
        train(m, data, TrainConfig(epochs=2, batch_size=50), callback=lambda e, idx, loss: seen.append((e, len(idx))))
        assert seen == [(0, 50)] * 4 + [(1, 50)] * 4

    def test_non_finite_loss(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        m.output[1].value[:] = np.nan
        with pytest.raises(NonFiniteLossError):
            train(m, data, TrainConfig(epochs=1))

    def test_empty_data(self, easy):
        _, v = easy
        with pytest.raises(ValueError):
            train(init_random(TINY, v, np.random.default_rng(0)), [], TrainConfig())


class TestEvaluate:
    def test_constant_model_on_balanced_data(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        m.output[0].value[:] = 0
        assert evaluate(m, data) == pytest.approx(0.5)

    def test_fraction(self, easy):
        data, v = easy
        m = init_random(TINY, v, np.random.default_rng(0))
        m.output[0].value[:] = 0
        m.output[1].value[:] = [1, 0]
        subset = [s for s in data if s.label == 0][:3] + [s for s in data if s.label == 1][:1]
        assert evaluate(m, subset) == 0.75

    def test_empty(self, easy):
        with pytest.raises(ValueError):
            evaluate(init_random(TINY, easy[1], np.random.default_rng(0)), [])


class TestCrossValidation:
    def test_split_sizes(self):
        cfg = TrainConfig(folds=10, test_fraction=0.1)
        for r in range(3):
            splits = cv_splits(100, cfg, r)
            assert len(splits) == 10
            for s in splits:
                assert len(s) == 10 and len(set(s.tolist())) == 10 and s.max() < 100

    def test_disjoint_partition(self):
        splits = cv_splits(103, TrainConfig(disjoint_folds=True), 0)
        allidx = np.concatenate(splits)
        assert sorted(allidx.tolist()) == list(range(103))

    def test_empty_fold_rejected(self):
        with pytest.raises(ConfigError):
            cv_splits(12, TrainConfig(folds=2, test_fraction=0.05), 0)

    def test_seed_trace_distinct(self):
        assert len({repetition_seed(0, r) for r in range(5)}) == 5

    def test_result_shape_and_determinism(self, easy):
        data, v = easy
        cfg = TrainConfig(epochs=1, folds=3, repetitions=2, seed=9)
        a = cross_validate(data[:60], cfg, model_config=TINY, vocab=v)
        b = cross_validate(data[:60], cfg, model_config=TINY, vocab=v)
        assert a == b
        assert len(a.per_repetition) == 2 and all(len(f) == 3 for f in a.per_fold)
        assert a.fold_test_sizes == [[6] * 3] * 2
        assert a.mean_accuracy == pytest.approx(np.mean(a.per_repetition))

    def test_parallel_equals_serial(self, easy):
        data, v = easy
        cfg = TrainConfig(epochs=1, folds=2, repetitions=1, seed=9)
        assert (cross_validate(data[:40], cfg, model_config=TINY, vocab=v, jobs=2)
                == cross_validate(data[:40], cfg, model_config=TINY, vocab=v))
