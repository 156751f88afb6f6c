"""Dense numeric kernels with hand-written backward passes.

Every forward op accepts an optional leading batch axis. Backward helpers
accumulate parameter gradients into :class:`ParamTensor` objects and return
the gradient with respect to the op's input.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class InputTooShortError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class LabelError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class FreezeViolation(RuntimeError):
    pass


class Activation(str, enum.Enum):
    IDEN = "Iden"
    TANH = "Tanh"
    RELU = "ReLU"

    @classmethod
    def parse(cls, name: str | Activation) -> Activation:
        if isinstance(name, Activation):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).lower():
                return kind
        raise ConfigError(f"unknown activation {name!r}; expected one of Iden, Tanh, ReLU")


def activate(kind: Activation, x: np.ndarray) -> np.ndarray:
    if kind is Activation.IDEN:
        return x
    if kind is Activation.TANH:
        return np.tanh(x)
    return np.maximum(x, 0)


def activate_backward(kind: Activation, x: np.ndarray, y: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient through ``y = activate(kind, x)``; ReLU'(0) is taken as 0."""
    if kind is Activation.IDEN:
        return dout
    if kind is Activation.TANH:
        return dout * (1 - y * y)
    return dout * (x > 0)


@dataclass(eq=False)
class ParamTensor:
    """A learnable array plus its gradient and Adadelta accumulators.

    ``row_mask`` optionally restricts which rows (first axis) may change; the
    embedding table uses it to keep the PAD row fixed.
    """

    value: np.ndarray
    trainable: bool = True
    row_mask: np.ndarray | None = None
    grad: np.ndarray = field(init=False, repr=False)
    acc_grad_sq: np.ndarray = field(init=False, repr=False)
    acc_update_sq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros_like(self.value)
        self.acc_grad_sq = np.zeros_like(self.value)
        self.acc_update_sq = np.zeros_like(self.value)
        if self.row_mask is not None:
            self.row_mask = np.asarray(self.row_mask, dtype=bool)
            if self.row_mask.shape != self.value.shape[:1]:
                raise ShapeError(f"row_mask shape {self.row_mask.shape} does not match rows {self.value.shape[:1]}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def accumulate(self, g: np.ndarray) -> None:
        if not self.trainable:
            return
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {self.value.shape}")
        self.grad += g
        if self.row_mask is not None:
            self.grad[~self.row_mask] = 0

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def reset_state(self) -> None:
        self.zero_grad()
        self.acc_grad_sq.fill(0)
        self.acc_update_sq.fill(0)


def matvec_affine(W: ParamTensor, b: ParamTensor, x: np.ndarray) -> np.ndarray:
    """``out[..., i] = sum_j W[i, j] * x[..., j] + b[i]``."""
    if W.value.ndim != 2:
        raise ShapeError(f"W must be 2-D, got shape {W.shape}")
    m, n = W.shape
    if b.shape != (m,):
        raise ShapeError(f"bias b has shape {b.shape}, expected ({m},) to match W {W.shape}")
    if x.shape[-1:] != (n,):
        raise ShapeError(f"input x has shape {x.shape}, last axis must be {n} to match W {W.shape}")
    return x @ W.value.T + b.value


def matvec_affine_backward(W: ParamTensor, b: ParamTensor, x: np.ndarray, dout: np.ndarray,
                           need_dx: bool = True) -> np.ndarray | None:
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    if W.trainable:
        W.accumulate(d2.T @ x2)
    if b.trainable:
        b.accumulate(d2.sum(axis=0))
    if not need_dx:
        return None
    return dout @ W.value


def _rows(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a).reshape(-1, a.shape[-1])


def conv_over_time(filters: ParamTensor, bias: ParamTensor, sentence: np.ndarray) -> np.ndarray:
    """Valid convolution along the word axis.

    ``filters`` is ``[F, h, d]`` and ``sentence`` is ``[..., L, d]``; the
    result is ``[..., F, L - h + 1]``.
    """
    if filters.value.ndim != 3:
        raise ShapeError(f"filters must be [F, h, d], got {filters.shape}")
    F, h, d = filters.shape
    if bias.shape != (F,):
        raise ShapeError(f"bias has shape {bias.shape}, expected ({F},) to match filters {filters.shape}")
    if sentence.ndim < 2 or sentence.shape[-1] != d:
        raise ShapeError(f"sentence has shape {sentence.shape}, expected [..., L, {d}] to match filters {filters.shape}")
    L = sentence.shape[-2]
    if L < h:
        raise InputTooShortError(f"sentence length {L} is shorter than filter height {h}")
    T = L - h + 1
    lead = sentence.shape[:-2]
    # one [rows, d] x [d, F] product per filter row, shifted into place
    x = _rows(sentence)
    out = np.zeros((*lead, T, F), dtype=np.result_type(sentence, filters.value))
    for i in range(h):
        out += (x @ filters.value[:, i, :].T).reshape(*lead, L, F)[..., i:i + T, :]
    out += bias.value
    return np.swapaxes(out, -1, -2)


def conv_over_time_backward(filters: ParamTensor, bias: ParamTensor, sentence: np.ndarray,
                            dout: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
    F, h, d = filters.shape
    dT = np.ascontiguousarray(np.swapaxes(dout, -1, -2))  # [..., T, F]
    T = dT.shape[-2]
    d2 = dT.reshape(-1, F)
    if filters.trainable:
        dW = np.empty_like(filters.value)
        for i in range(h):
            dW[:, i, :] = d2.T @ _rows(sentence[..., i:i + T, :])
        filters.accumulate(dW)
    if bias.trainable:
        bias.accumulate(d2.sum(axis=0))
    if not need_dx:
        return None
    dx = np.zeros_like(sentence)
    for i in range(h):
        dx[..., i:i + T, :] += (d2 @ filters.value[:, i, :]).reshape(*dT.shape[:-1], d)
    return dx


def max_over_time(featmap: np.ndarray, valid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """1-max pooling over the last axis.

    ``valid`` optionally gives, per leading index, how many time steps count
    (steps beyond it are ignored). Returns ``(pooled, argmax)``; ties go to
    the lowest time index.
    """
    T = featmap.shape[-1]
    if T == 0:
        raise EmptyInputError("max_over_time needs at least one time step")
    if valid is not None:
        valid = np.asarray(valid)
        if np.any(valid < 1):
            raise EmptyInputError("every row needs at least one valid time step")
        steps = np.arange(T)
        # valid has the batch shape; broadcast over the feature axis
        invalid = steps >= valid.reshape(*valid.shape, 1, 1)
        featmap = np.where(invalid, -np.inf, featmap)
    idx = np.argmax(featmap, axis=-1)
    pooled = np.take_along_axis(featmap, idx[..., None], axis=-1)[..., 0]
    return pooled, idx


def max_over_time_backward(idx: np.ndarray, dout: np.ndarray, T: int) -> np.ndarray:
    dfeat = np.zeros((*dout.shape, T), dtype=dout.dtype)
    np.put_along_axis(dfeat, idx[..., None], dout[..., None], axis=-1)
    return dfeat


def softmax_xent(logits: np.ndarray, label) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy with max-subtraction.

    ``logits`` is ``[C]`` with an int label, or ``[B, C]`` with ``B`` labels;
    the batch loss is the mean over examples.
    """
    C = logits.shape[-1]
    labels = np.atleast_1d(np.asarray(label))
    if np.any(labels < 0) or np.any(labels >= C):
        raise LabelError(f"label {label!r} out of range for {C} classes")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=-1, keepdims=True)
    logp = z - np.log(e.sum(axis=-1, keepdims=True))
    rows = np.atleast_2d(logp)
    loss = -float(np.mean(rows[np.arange(rows.shape[0]), labels]))
    return loss, probs


def softmax_xent_grad(probs: np.ndarray, label) -> np.ndarray:
    """Gradient of the (mean) loss with respect to the logits."""
    g = np.array(probs, copy=True)
    if g.ndim == 1:
        g[int(label)] -= 1
        return g
    labels = np.asarray(label)
    g[np.arange(g.shape[0]), labels] -= 1
    return g / g.shape[0]


def apply_dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None,
                  training: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. Returns ``(out, mask)``; mask is None when no-op."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return x * mask, mask
