"""Transfer matrix, dropout sweep and activation sweep runners."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import CnnModel, ModelConfig, init_random
from .nn import Activation
from .plan import BASELINE, DEFAULT_SETTINGS, FINETUNE_THROUGH_H, FROZEN_THROUGH_H, TransferPlan
from .report import ReportTable
from .text import Example, Vocabulary, build_vocab, encode_dataset, load_pretrained_vectors
from .trainer import RunResult, TrainConfig, cross_validate, train
from .transfer import Checkpoint, ClassCountMismatch, checkpoint_from_model, validate_plan

log = logging.getLogger(__name__)

DEFAULT_DROPOUT_RATES = tuple(round(0.1 * i, 1) for i in range(10))
ACTIVATIONS = (Activation.IDEN, Activation.TANH, Activation.RELU)


def num_classes_of(examples: Sequence[Example]) -> int:
    return max(2, max(ex.label for ex in examples) + 1)


def train_from_scratch(examples: Sequence[Example], model_config: ModelConfig, cfg: TrainConfig,
                       dtype=np.float32, min_count: int = 1, vectors=None,
                       rng: np.random.Generator | None = None) -> tuple[CnnModel, Vocabulary]:
    """Build a vocabulary over ``examples`` and train an all-fresh model on all of them."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    vocab = build_vocab((ex.tokens for ex in examples), min_count)
    emb = None
    if vectors is not None:
        emb, _ = load_pretrained_vectors(vectors, vocab, rng, d=model_config.d, dtype=dtype)
    model = init_random(model_config, vocab, rng, dtype=dtype, embeddings=emb)
    train(model, encode_dataset(examples, vocab, model_config.max_len, model_config.min_len), cfg, rng)
    return model, vocab


@dataclass
class TransferPair:
    source_id: str
    source: Checkpoint
    target_id: str
    target: Sequence[Example]

    @property
    def label(self) -> str:
        return f"{self.source_id} ↠ {self.target_id}"


@dataclass
class MatrixResult:
    table: ReportTable
    runs: dict[tuple[str, str], RunResult | None] = field(default_factory=dict)
    configs: dict[str, ModelConfig] = field(default_factory=dict)
    settings: list[TransferPlan] = field(default_factory=list)


def target_config(source: ModelConfig, target: Sequence[Example], **overrides) -> ModelConfig:
    return source.replace(num_classes=num_classes_of(target), **overrides)


def run_matrix(pairs: Sequence[TransferPair], settings: Sequence[TransferPlan] = DEFAULT_SETTINGS,
               cfg: TrainConfig = TrainConfig(), include_baseline: bool = False, dtype=np.float32,
               jobs: int = 1, min_count: int = 1, **overrides) -> MatrixResult:
    """Cross-validated accuracy of every setting on every pair.

    Settings that would transfer the O layer across different class counts
    yield ``None`` cells (rendered ``---``). Any other structural problem is
    raised before training starts.
    """
    settings = list(settings) + ([BASELINE] if include_baseline and BASELINE not in settings else [])
    prepared = []
    for pair in pairs:
        tcfg = target_config(pair.source.config, pair.target, **overrides)
        vocab = build_vocab((ex.tokens for ex in pair.target), min_count)
        possible = []
        for plan in settings:
            try:
                validate_plan(pair.source.config, tcfg, plan)
                possible.append(True)
            except ClassCountMismatch:
                possible.append(False)
        prepared.append((pair, tcfg, vocab, possible))

    result = MatrixResult(ReportTable("Transfer accuracy (%)", [p.label for p in settings],
                                      [p.label for p in pairs],
                                      [[None] * len(pairs) for _ in settings]), settings=settings)
    for j, (pair, tcfg, vocab, possible) in enumerate(prepared):
        result.configs[pair.label] = tcfg
        data = encode_dataset(pair.target, vocab, tcfg.max_len, tcfg.min_len)
        for i, plan in enumerate(settings):
            if not possible[i]:
                result.runs[(plan.label, pair.label)] = None
                continue
            log.info("running %s on %s", plan.label, pair.label)
            run = cross_validate(data, cfg, plan, pair.source, model_config=tcfg, vocab=vocab,
                                 dtype=dtype, jobs=jobs)
            result.runs[(plan.label, pair.label)] = run
            result.table.cells[i][j] = round(100 * run.mean_accuracy, 2)
    return result


def run_dropout_sweep(pairs: Sequence[TransferPair], rates: Sequence[float] = DEFAULT_DROPOUT_RATES,
                      cfg: TrainConfig = TrainConfig(), plan: TransferPlan = FINETUNE_THROUGH_H,
                      dtype=np.float32, jobs: int = 1, min_count: int = 1, **overrides) -> ReportTable:
    """One cross-validation per dropout rate (rows) and pair (columns) under ``plan``."""
    for r in rates:
        if not 0 <= r < 1:
            raise ValueError(f"dropout rate {r} outside [0, 1)")
    table = ReportTable(f"Dropout rate vs transfer accuracy (%) under {plan.label}",
                        [f"{r:.1f}" for r in rates], [p.label for p in pairs],
                        [[None] * len(pairs) for _ in rates], row_header="Dropout")
    for j, pair in enumerate(pairs):
        base = target_config(pair.source.config, pair.target, **overrides)
        validate_plan(pair.source.config, base, plan)
        vocab = build_vocab((ex.tokens for ex in pair.target), min_count)
        data = encode_dataset(pair.target, vocab, base.max_len, base.min_len)
        for i, rate in enumerate(rates):
            tcfg = base.replace(dropout_rate=rate)
            run = cross_validate(data, cfg.replace(dropout_rate=None), plan, pair.source,
                                 model_config=tcfg, vocab=vocab, dtype=dtype, jobs=jobs)
            table.cells[i][j] = round(100 * run.mean_accuracy, 2)
    return table


def with_activation(config: ModelConfig, act: Activation | str) -> ModelConfig:
    """Same config with ``act`` on both the C and H layer outputs."""
    act = Activation.parse(act)
    return config.replace(conv_activation=act, hidden_activation=act)


def run_activation_sweep(source_id: str, source_data: Sequence[Example], target_id: str,
                         target_data: Sequence[Example], model_config: ModelConfig,
                         source_acts: Sequence[Activation | str] = ACTIVATIONS,
                         target_acts: Sequence[Activation | str] = ACTIVATIONS,
                         cfg: TrainConfig = TrainConfig(), source_cfg: TrainConfig | None = None,
                         dtype=np.float32, jobs: int = 1, min_count: int = 1) -> ReportTable:
    """Grid of (frozen, fine-tuned) accuracies per source and target activation."""
    source_acts = [Activation.parse(a) for a in source_acts]
    target_acts = [Activation.parse(a) for a in target_acts]
    source_cfg = source_cfg or cfg
    src_cfg = model_config.replace(num_classes=num_classes_of(source_data))
    checkpoints = {}
    for act in source_acts:
        model, vocab = train_from_scratch(source_data, with_activation(src_cfg, act), source_cfg,
                                          dtype=dtype, min_count=min_count)
        checkpoints[act] = checkpoint_from_model(model, vocab, f"{source_id}-{act.value}")
    vocab = build_vocab((ex.tokens for ex in target_data), min_count)
    base = model_config.replace(num_classes=num_classes_of(target_data))
    data = encode_dataset(target_data, vocab, base.max_len, base.min_len)
    table = ReportTable("Activation function vs transfer accuracy (%) (frozen, fine-tuned)",
                        [f"{source_id}-{a.value}" for a in source_acts],
                        [f"{target_id}-{a.value}" for a in target_acts],
                        [[None] * len(target_acts) for _ in source_acts], row_header="Model")
    for i, sa in enumerate(source_acts):
        for j, ta in enumerate(target_acts):
            tcfg = with_activation(base, ta)
            pair = []
            for plan in (FROZEN_THROUGH_H, FINETUNE_THROUGH_H):
                run = cross_validate(data, cfg, plan, checkpoints[sa], model_config=tcfg, vocab=vocab,
                                     dtype=dtype, jobs=jobs)
                pair.append(round(100 * run.mean_accuracy, 2))
            table.cells[i][j] = tuple(pair)
    return table
