"""Layer ids, per-layer transfer modes and ECHO plans."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .nn import ConfigError


class LayerId(str, enum.Enum):
    E = "E"
    C = "C"
    H = "H"
    O = "O"


LAYERS = (LayerId.E, LayerId.C, LayerId.H, LayerId.O)


class LayerMode(str, enum.Enum):
    FRESH = "fresh"
    FROZEN = "frozen"
    FINETUNE = "finetune"

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    @property
    def ascii(self) -> str:
        return _ASCII[self]

    @property
    def transferred(self) -> bool:
        return self is not LayerMode.FRESH

    @property
    def trainable(self) -> bool:
        return self is not LayerMode.FROZEN


_SYMBOLS = {LayerMode.FRESH: "★", LayerMode.FROZEN: "🔒", LayerMode.FINETUNE: "🔓"}
_ASCII = {LayerMode.FRESH: "*", LayerMode.FROZEN: "L", LayerMode.FINETUNE: "U"}
_PARSE = {
    "★": LayerMode.FRESH, "✳": LayerMode.FRESH, "*": LayerMode.FRESH,
    "🔒": LayerMode.FROZEN, "L": LayerMode.FROZEN,
    "🔓": LayerMode.FINETUNE, "U": LayerMode.FINETUNE,
}


@dataclass(frozen=True)
class TransferPlan:
    e: LayerMode = LayerMode.FRESH
    c: LayerMode = LayerMode.FRESH
    h: LayerMode = LayerMode.FRESH
    o: LayerMode = LayerMode.FRESH

    def mode(self, layer: LayerId | str) -> LayerMode:
        return getattr(self, LayerId(layer).value.lower())

    @property
    def label(self) -> str:
        return "".join(f"{layer.value}{self.mode(layer).symbol}" for layer in LAYERS)

    @property
    def ascii(self) -> str:
        return "".join(f"{layer.value}{self.mode(layer).ascii}" for layer in LAYERS)

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text: str) -> TransferPlan:
        """Parse ``E🔓C★H★O★`` or its ASCII form ``EUC*H*O*`` (L = frozen, U = fine-tune, * = fresh)."""
        s = text.replace(" ", "").replace("️", "")
        modes = {}
        pos = 0
        for layer in LAYERS:
            if pos >= len(s) or s[pos].upper() != layer.value:
                raise ConfigError(f"bad plan {text!r}: expected layer {layer.value} at position {pos}")
            pos += 1
            sym = s[pos:pos + 1].upper()
            if sym not in _PARSE:
                raise ConfigError(f"bad plan {text!r}: unknown mode symbol {sym!r} for layer {layer.value}")
            modes[layer.value.lower()] = _PARSE[sym]
            pos += 1
        if pos != len(s):
            raise ConfigError(f"bad plan {text!r}: trailing characters")
        return cls(**modes)


def _p(text: str) -> TransferPlan:
    return TransferPlan.parse(text)


BASELINE = TransferPlan()

# Row order of the reference transfer table.
DEFAULT_SETTINGS = (
    _p("ELC*H*O*"),
    _p("ELCLH*O*"),
    _p("ELCLHLO*"),
    _p("ELCLHLOL"),
    _p("EUC*H*O*"),
    _p("EUCUH*O*"),
    _p("EUCUHUO*"),
    _p("EUCUHUOU"),
)

FROZEN_THROUGH_H = _p("ELCLHLO*")
FINETUNE_THROUGH_H = _p("EUCUHUO*")
