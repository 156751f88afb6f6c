"""The baseline sentence CNN as four transferable layers (E, C, H, O)."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .nn import Activation, ConfigError, ParamTensor
from .plan import LayerId, LayerMode, TransferPlan
from .text import EmbeddingTable, EncodedSentence, Vocabulary, random_embeddings

WEIGHT_INIT_RANGE = 0.05


@dataclass(frozen=True)
class ModelConfig:
    d: int = 300
    region_sizes: tuple[int, ...] = (3, 4, 5)
    feature_maps: int = 100
    hidden_units: int = 100
    num_classes: int = 2
    conv_activation: Activation = Activation.RELU
    hidden_activation: Activation = Activation.IDEN
    dropout_rate: float = 0.6
    l2_cap: float = 3.0
    dropout_pooled: bool = True
    dropout_hidden: bool = True
    max_len: int = 200

    def __post_init__(self) -> None:
        object.__setattr__(self, "region_sizes", tuple(int(h) for h in self.region_sizes))
        object.__setattr__(self, "conv_activation", Activation.parse(self.conv_activation))
        object.__setattr__(self, "hidden_activation", Activation.parse(self.hidden_activation))
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if not self.region_sizes or min(self.region_sizes) < 1:
            raise ConfigError("region sizes must be non-empty and >= 1")
        if self.feature_maps < 1 or self.hidden_units < 1:
            raise ConfigError("feature_maps and hidden_units must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.max_len < self.min_len:
            raise ConfigError(f"max_len {self.max_len} is below the largest region size {self.min_len}")

    @property
    def pooled_size(self) -> int:
        return self.feature_maps * len(self.region_sizes)

    @property
    def min_len(self) -> int:
        return max(self.region_sizes)

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["region_sizes"] = list(self.region_sizes)
        out["conv_activation"] = self.conv_activation.value
        out["hidden_activation"] = self.hidden_activation.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(eq=False)
class CnnModel:
    config: ModelConfig
    embeddings: EmbeddingTable
    conv: list[tuple[ParamTensor, ParamTensor]]
    hidden: tuple[ParamTensor, ParamTensor]
    output: tuple[ParamTensor, ParamTensor]

    @property
    def dtype(self) -> np.dtype:
        return self.embeddings.matrix.value.dtype

    def layer_params(self, layer: LayerId | str) -> list[tuple[str, ParamTensor]]:
        layer = LayerId(layer)
        if layer is LayerId.E:
            return [("embeddings", self.embeddings.matrix)]
        if layer is LayerId.C:
            out = []
            for h, (filt, bias) in zip(self.config.region_sizes, self.conv):
                out += [(f"filters.{h}", filt), (f"bias.{h}", bias)]
            return out
        W, b = self.hidden if layer is LayerId.H else self.output
        return [("weight", W), ("bias", b)]

    def named_params(self) -> list[tuple[str, ParamTensor]]:
        return [(f"{layer.value}/{name}", p) for layer in LayerId for name, p in self.layer_params(layer)]

    def set_layer_trainable(self, layer: LayerId | str, trainable: bool) -> None:
        for _, p in self.layer_params(layer):
            p.trainable = trainable


def _uniform(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    return rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, size=shape).astype(dtype)


def init_random(config: ModelConfig, vocab: Vocabulary, rng: np.random.Generator, dtype=np.float32,
                embeddings: EmbeddingTable | None = None) -> CnnModel:
    """All-fresh model: U(-0.05, 0.05) weights, zero biases, random embeddings.

    Draw order is fixed (embeddings, filters per region size, H, O) so a seed
    fully determines the parameters.
    """
    dtype = np.dtype(dtype)
    if embeddings is None:
        embeddings = random_embeddings(vocab, config.d, rng, dtype)
    elif embeddings.matrix.shape != (vocab.num_rows, config.d):
        raise nn.ShapeError(f"embedding table {embeddings.matrix.shape} does not fit vocab rows {vocab.num_rows} x d={config.d}")
    conv = []
    for h in config.region_sizes:
        filt = ParamTensor(_uniform(rng, (config.feature_maps, h, config.d), dtype))
        conv.append((filt, ParamTensor(np.zeros(config.feature_maps, dtype=dtype))))
    hidden = (ParamTensor(_uniform(rng, (config.hidden_units, config.pooled_size), dtype)),
              ParamTensor(np.zeros(config.hidden_units, dtype=dtype)))
    output = (ParamTensor(_uniform(rng, (config.num_classes, config.hidden_units), dtype)),
              ParamTensor(np.zeros(config.num_classes, dtype=dtype)))
    return CnnModel(config, embeddings, conv, hidden, output)


def batch_arrays(batch: Sequence[EncodedSentence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack encodings into ``(ids [B, Lmax], padded_lengths [B], labels [B])``."""
    lengths = np.array([len(s.token_ids) for s in batch], dtype=np.int64)
    ids = np.zeros((len(batch), int(lengths.max())), dtype=np.int64)
    for i, s in enumerate(batch):
        ids[i, :len(s.token_ids)] = s.token_ids
    labels = np.array([s.label for s in batch], dtype=np.int64)
    return ids, lengths, labels


@dataclass
class _Trace:
    ids: np.ndarray
    x: np.ndarray
    conv_pre: list = field(default_factory=list)
    conv_act: list = field(default_factory=list)
    argmax: list = field(default_factory=list)
    pooled: np.ndarray | None = None
    pooled_in: np.ndarray | None = None
    mask_pooled: np.ndarray | None = None
    hidden_pre: np.ndarray | None = None
    hidden_act: np.ndarray | None = None
    hidden_in: np.ndarray | None = None
    mask_hidden: np.ndarray | None = None


def _forward(model: CnnModel, batch: Sequence[EncodedSentence], training: bool,
             rng: np.random.Generator | None, dropout_rate: float | None):
    cfg = model.config
    rate = cfg.dropout_rate if dropout_rate is None else dropout_rate
    ids, lengths, labels = batch_arrays(batch)
    if lengths.min() < cfg.min_len:
        raise nn.InputTooShortError(f"encoded sentence of length {lengths.min()} is shorter than region size {cfg.min_len}")
    x = model.embeddings.matrix.value[ids]
    tr = _Trace(ids, x)
    pooled = []
    for h, (filt, bias) in zip(cfg.region_sizes, model.conv):
        z = nn.conv_over_time(filt, bias, x)
        a = nn.activate(cfg.conv_activation, z)
        p, idx = nn.max_over_time(a, lengths - h + 1)
        tr.conv_pre.append(z)
        tr.conv_act.append(a)
        tr.argmax.append(idx)
        pooled.append(p)
    tr.pooled = np.concatenate(pooled, axis=-1)
    tr.pooled_in, tr.mask_pooled = nn.apply_dropout(tr.pooled, rate if cfg.dropout_pooled else 0.0, rng, training)
    W_h, b_h = model.hidden
    tr.hidden_pre = nn.matvec_affine(W_h, b_h, tr.pooled_in)
    tr.hidden_act = nn.activate(cfg.hidden_activation, tr.hidden_pre)
    tr.hidden_in, tr.mask_hidden = nn.apply_dropout(tr.hidden_act, rate if cfg.dropout_hidden else 0.0, rng, training)
    W_o, b_o = model.output
    logits = nn.matvec_affine(W_o, b_o, tr.hidden_in)
    loss, probs = nn.softmax_xent(logits, labels)
    return loss, probs, labels, tr


def forward(model: CnnModel, batch: Sequence[EncodedSentence], training: bool = False,
            rng: np.random.Generator | None = None, dropout_rate: float | None = None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and per-example class probabilities ``[B, C]``."""
    loss, probs, _, _ = _forward(model, batch, training, rng, dropout_rate)
    return loss, probs


def forward_backward(model: CnnModel, batch: Sequence[EncodedSentence], training: bool = True,
                     rng: np.random.Generator | None = None, dropout_rate: float | None = None) -> tuple[float, np.ndarray]:
    """Run :func:`forward` and accumulate gradients into every trainable tensor."""
    cfg = model.config
    loss, probs, labels, tr = _forward(model, batch, training, rng, dropout_rate)
    need_c = any(p.trainable for _, p in model.layer_params(LayerId.C))
    need_e = model.embeddings.matrix.trainable
    need_below_h = need_c or need_e
    need_below_o = need_below_h or any(p.trainable for _, p in model.layer_params(LayerId.H))

    dlogits = nn.softmax_xent_grad(probs, labels)
    W_o, b_o = model.output
    dh = nn.matvec_affine_backward(W_o, b_o, tr.hidden_in, dlogits, need_dx=need_below_o)
    if not need_below_o:
        return loss, probs
    if tr.mask_hidden is not None:
        dh = dh * tr.mask_hidden
    dh = nn.activate_backward(cfg.hidden_activation, tr.hidden_pre, tr.hidden_act, dh)
    W_h, b_h = model.hidden
    dpool = nn.matvec_affine_backward(W_h, b_h, tr.pooled_in, dh, need_dx=need_below_h)
    if not need_below_h:
        return loss, probs
    if tr.mask_pooled is not None:
        dpool = dpool * tr.mask_pooled
    dx = np.zeros_like(tr.x) if need_e else None
    F = cfg.feature_maps
    for k, (filt, bias) in enumerate(model.conv):
        dp = dpool[..., k * F:(k + 1) * F]
        a = tr.conv_act[k]
        da = nn.max_over_time_backward(tr.argmax[k], dp, a.shape[-1])
        dz = nn.activate_backward(cfg.conv_activation, tr.conv_pre[k], a, da)
        g = nn.conv_over_time_backward(filt, bias, tr.x, dz, need_dx=need_e)
        if need_e:
            dx += g
    if need_e:
        E = model.embeddings.matrix
        gE = np.zeros_like(E.value)
        np.add.at(gE, tr.ids.ravel(), dx.reshape(-1, dx.shape[-1]))
        E.accumulate(gE)
    return loss, probs


def predict_proba(model: CnnModel, data: Sequence[EncodedSentence], batch_size: int = 256) -> np.ndarray:
    out = [forward(model, data[i:i + batch_size])[1] for i in range(0, len(data), batch_size)]
    return np.concatenate(out, axis=0)


def predict(model: CnnModel, sentence: EncodedSentence) -> int:
    """Most probable class; exact ties go to the lowest class index."""
    return int(np.argmax(forward(model, [sentence])[1][0]))


def param_count(model: CnnModel, plan: TransferPlan | None = None) -> int:
    """Trainable scalars of the C and H layers; E and O are never counted.

    A layer contributes nothing when ``plan`` marks it frozen.
    """
    plan = plan or TransferPlan()
    total = 0
    for layer in (LayerId.C, LayerId.H):
        if plan.mode(layer) is not LayerMode.FROZEN:
            total += sum(p.size for _, p in model.layer_params(layer))
    return total


def config_param_count(config: ModelConfig, plan: TransferPlan | None = None) -> int:
    """:func:`param_count` computed from shapes alone, without building a model."""
    plan = plan or TransferPlan()
    total = 0
    if plan.c is not LayerMode.FROZEN:
        total += sum(config.feature_maps * h * config.d + config.feature_maps for h in config.region_sizes)
    if plan.h is not LayerMode.FROZEN:
        total += config.hidden_units * config.pooled_size + config.hidden_units
    return total
