"""Sentence-classification CNN with layer-wise transfer between text domains."""
from .model import CnnModel, ModelConfig, config_param_count, forward, init_random, param_count, predict
from .nn import Activation, ConfigError, FreezeViolation
from .plan import BASELINE, DEFAULT_SETTINGS, LayerId, LayerMode, TransferPlan
from .text import Vocabulary, build_vocab, encode, encode_dataset, read_dataset, tokenize
from .trainer import RunResult, TrainConfig, cross_validate, evaluate, train
from .transfer import build_transfer_model, load_checkpoint, save_checkpoint

__all__ = [
    "Activation", "BASELINE", "CnnModel", "ConfigError", "DEFAULT_SETTINGS", "FreezeViolation", "LayerId",
    "LayerMode", "ModelConfig", "RunResult", "TrainConfig", "TransferPlan", "Vocabulary", "build_transfer_model",
    "build_vocab", "config_param_count", "cross_validate", "encode", "encode_dataset", "evaluate", "forward",
    "init_random", "load_checkpoint", "param_count", "predict", "read_dataset", "save_checkpoint", "tokenize",
    "train",
]
