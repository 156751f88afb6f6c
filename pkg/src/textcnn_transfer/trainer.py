"""Adadelta mini-batch training, evaluation and Monte-Carlo cross-validation."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import CnnModel, ModelConfig, forward_backward, init_random, predict_proba
from .nn import ConfigError, FreezeViolation, ParamTensor
from .plan import TransferPlan
from .text import EncodedSentence, Vocabulary


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    epochs: int = 10
    rho: float = 0.95
    epsilon: float = 1e-6
    dropout_rate: float | None = None  # None: use the model config's rate
    l2_cap: float | None = None  # None: use the model config's cap; math.inf disables
    seed: int = 0
    folds: int = 10
    repetitions: int = 5
    test_fraction: float = 0.1
    disjoint_folds: bool = False
    cap_conv: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.dropout_rate is not None and not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must be in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.folds < 1 or self.repetitions < 1:
            raise ConfigError("folds and repetitions must be >= 1")

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class RunResult:
    mean_accuracy: float
    per_fold: list[list[float]]
    per_repetition: list[float]
    seed_trace: list[int]
    fold_test_sizes: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def adadelta_step(p: ParamTensor, rho: float, epsilon: float) -> None:
    """One Adadelta update of ``p`` from its accumulated gradient, then clear it."""
    if not p.trainable:
        raise FreezeViolation("adadelta_step called on a frozen tensor")
    g = p.grad
    p.acc_grad_sq *= rho
    p.acc_grad_sq += (1 - rho) * g * g
    delta = -(np.sqrt(p.acc_update_sq + epsilon) / np.sqrt(p.acc_grad_sq + epsilon)) * g
    if p.row_mask is not None:
        delta[~p.row_mask] = 0
    p.value += delta
    p.acc_update_sq *= rho
    p.acc_update_sq += (1 - rho) * delta * delta
    p.zero_grad()


def apply_l2_cap(W: ParamTensor, cap: float) -> None:
    """Rescale every row (output unit) whose l2 norm exceeds ``cap`` back to ``cap``."""
    rows = W.value.reshape(W.shape[0], -1)
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    over = norms > cap
    if np.any(over):
        rows[over] *= (cap / norms[over])[:, None].astype(rows.dtype)


def _capped(model: CnnModel, cfg: TrainConfig) -> list[ParamTensor]:
    out = [model.hidden[0], model.output[0]]
    if cfg.cap_conv:
        out += [filt for filt, _ in model.conv]
    return [p for p in out if p.trainable]


def train(model: CnnModel, data: Sequence[EncodedSentence], cfg: TrainConfig,
          rng: np.random.Generator | None = None,
          callback: Callable[[int, np.ndarray, float], None] | None = None) -> CnnModel:
    """Train ``model`` in place with shuffled mini-batches.

    Trainable flags must already reflect the transfer plan; frozen tensors are
    never touched. ``callback(epoch, batch_indices, loss)`` runs after each step.
    """
    if not data:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    cap = model.config.l2_cap if cfg.l2_cap is None else cfg.l2_cap
    params = [p for _, p in model.named_params() if p.trainable]
    capped = _capped(model, cfg) if math.isfinite(cap) else []
    if not params:
        return model
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, _ = forward_backward(model, [data[i] for i in idx], training=True, rng=rng,
                                       dropout_rate=cfg.dropout_rate)
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss {loss} in epoch {epoch}")
            for p in params:
                adadelta_step(p, cfg.rho, cfg.epsilon)
            for W in capped:
                apply_l2_cap(W, cap)
            if callback is not None:
                callback(epoch, idx, loss)
    return model


def evaluate(model: CnnModel, data: Sequence[EncodedSentence]) -> float:
    """Fraction of examples whose predicted class equals the label."""
    if not data:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = predict_proba(model, data)
    labels = np.array([s.label for s in data])
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def repetition_seed(seed: int, repetition: int) -> int:
    return int(np.random.SeedSequence([seed, repetition]).generate_state(1, np.uint64)[0] >> 1)


def fold_rng(rep_seed: int, fold: int, stream: int) -> np.random.Generator:
    """Stream 0 draws the fold's held-out sample, stream 1 drives init and training."""
    return np.random.default_rng(np.random.SeedSequence([rep_seed, fold, stream]))


def cv_splits(n: int, cfg: TrainConfig, repetition: int) -> list[np.ndarray]:
    """Held-out indices for every fold of one repetition."""
    if n < cfg.folds:
        raise ConfigError(f"need at least {cfg.folds} examples for {cfg.folds} folds, got {n}")
    if cfg.disjoint_folds:
        perm = np.random.default_rng(repetition_seed(cfg.seed, repetition)).permutation(n)
        return [np.sort(part) for part in np.array_split(perm, cfg.folds)]
    k = int(math.floor(cfg.test_fraction * n))
    if k == 0:
        raise ConfigError(f"test_fraction {cfg.test_fraction} of {n} examples leaves an empty test fold")
    rep_seed = repetition_seed(cfg.seed, repetition)
    return [np.sort(fold_rng(rep_seed, f, 0).choice(n, size=k, replace=False)) for f in range(cfg.folds)]


@dataclass
class _FoldJob:
    data: Sequence[EncodedSentence]
    test_idx: np.ndarray
    cfg: TrainConfig
    plan: TransferPlan | None
    source: object
    model_config: ModelConfig
    vocab: Vocabulary
    dtype: str
    repetition: int
    fold: int


def _run_fold(job: _FoldJob) -> float:
    from .transfer import build_transfer_model

    rng = fold_rng(repetition_seed(job.cfg.seed, job.repetition), job.fold, 1)
    held = np.zeros(len(job.data), dtype=bool)
    held[job.test_idx] = True
    train_set = [s for s, h in zip(job.data, held) if not h]
    test_set = [s for s, h in zip(job.data, held) if h]
    if job.source is not None and job.plan is not None:
        model = build_transfer_model(job.source, job.vocab, job.model_config, job.plan, rng, dtype=job.dtype)
    else:
        model = init_random(job.model_config, job.vocab, rng, dtype=job.dtype)
    train(model, train_set, job.cfg, rng)
    return evaluate(model, test_set)


def cross_validate(data: Sequence[EncodedSentence], cfg: TrainConfig, plan: TransferPlan | None = None,
                   source=None, *, model_config: ModelConfig, vocab: Vocabulary,
                   dtype=np.float32, jobs: int = 1) -> RunResult:
    """Repeated k-fold evaluation.

    By default each fold holds out a fresh uniform sample of
    ``floor(test_fraction * N)`` examples; ``cfg.disjoint_folds`` switches to
    classic partitioning. With ``source`` (a checkpoint) and ``plan`` every
    fold model is built by transfer, otherwise from scratch.
    """
    dtype = np.dtype(dtype).name
    jobs_list = []
    sizes = []
    for r in range(cfg.repetitions):
        splits = cv_splits(len(data), cfg, r)
        sizes.append([len(s) for s in splits])
        for f, test_idx in enumerate(splits):
            jobs_list.append(_FoldJob(data, test_idx, cfg, plan, source, model_config, vocab, dtype, r, f))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accs = list(pool.map(_run_fold, jobs_list))
    else:
        accs = [_run_fold(j) for j in jobs_list]
    per_fold = [accs[r * cfg.folds:(r + 1) * cfg.folds] for r in range(cfg.repetitions)]
    per_rep = [float(np.mean(f)) for f in per_fold]
    return RunResult(
        mean_accuracy=float(np.mean(per_rep)),
        per_fold=per_fold,
        per_repetition=per_rep,
        seed_trace=[repetition_seed(cfg.seed, r) for r in range(cfg.repetitions)],
        fold_test_sizes=sizes,
    )
