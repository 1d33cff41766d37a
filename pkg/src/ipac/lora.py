"""Low-rank adapters on the encoder's linear maps.

An adapted map computes ``W x + b + (alpha / r) * B (A drop(x))`` with ``B``
zero-initialised, so attaching fresh adapters leaves every output unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import NoAdapters, ShapeMismatch
from .numerics import Tensor, add, dropout, linear, reshape, scale

if TYPE_CHECKING:
    from .encoder import EncoderModel

TARGETS = ("q", "k", "v", "o", "ff_up", "ff_down")

# target -> parameter prefix inside a layer
TARGET_PREFIX = {
    "q": "attn.q",
    "k": "attn.k",
    "v": "attn.v",
    "o": "attn.o",
    "ff_up": "ff.up",
    "ff_down": "ff.down",
}


def target_dims(target: str, hidden: int, ff_dim: int) -> tuple[int, int]:
    """(fan_in, fan_out) of a target linear map."""
    if target == "ff_up":
        return hidden, ff_dim
    if target == "ff_down":
        return ff_dim, hidden
    if target in TARGET_PREFIX:
        return hidden, hidden
    raise ValueError(f"unknown LoRA target {target!r}")


def parse_targets(spec: str) -> frozenset[str]:
    """Parse ``all`` or a comma list such as ``q,v,ff_up``."""
    spec = spec.strip()
    if spec == "all":
        return frozenset(TARGETS)
    names = [t.strip() for t in spec.split(",") if t.strip()]
    bad = [t for t in names if t not in TARGET_PREFIX]
    if bad or not names:
        raise ValueError(f"unknown LoRA targets: {bad or spec!r}")
    return frozenset(names)


@dataclass(frozen=True)
class LoraConfig:
    r: int = 8
    alpha: float = 32.0
    dropout: float = 0.1
    targets: frozenset[str] = field(default_factory=lambda: frozenset(TARGETS))
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        if self.r < 0:
            raise ValueError("LoRA rank must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("LoRA dropout must be in [0, 1)")
        if self.r > 0 and not self.targets:
            raise ValueError("LoRA targets must be non-empty when r > 0")
        unknown = self.targets - set(TARGETS)
        if unknown:
            raise ValueError(f"unknown LoRA targets {sorted(unknown)}")

    @property
    def scaling(self) -> float:
        return self.alpha / self.r if self.r else 0.0

    def to_dict(self) -> dict:
        return {"r": self.r, "alpha": self.alpha, "dropout": self.dropout,
                "targets": sorted(self.targets), "init_std": self.init_std}

    @classmethod
    def from_dict(cls, d: dict) -> "LoraConfig":
        return cls(r=d["r"], alpha=d["alpha"], dropout=d["dropout"],
                   targets=frozenset(d["targets"]), init_std=d.get("init_std", 0.02))


@dataclass
class LoraAdapter:
    A: Tensor  # r x in
    B: Tensor  # out x r
    scaling: float
    dropout: float = 0.0

    @property
    def num_params(self) -> int:
        return self.A.size + self.B.size


def lora_param_count(r: int, fan_in: int, fan_out: int) -> int:
    return r * (fan_in + fan_out)


def lora_forward(base_W: Tensor, base_b: Tensor | None, adapter: LoraAdapter | None,
                 x: Tensor, train_mode: bool = False, seed: int = 0) -> Tensor:
    """Adapted linear map on the rows of ``x`` (a 1-D ``x`` is treated as one row)."""
    flat = x.data.ndim == 1
    if flat:
        x = reshape(x, (1, x.shape[0]))
    y = linear(x, base_W, base_b)
    if adapter is not None:
        r, fan_in = adapter.A.shape
        if fan_in != base_W.shape[1] or adapter.B.shape != (base_W.shape[0], r):
            raise ShapeMismatch(f"adapter A{adapter.A.shape} B{adapter.B.shape} on weight {base_W.shape}")
        xin = dropout(x, adapter.dropout, seed) if train_mode else x
        delta = linear(linear(xin, adapter.A), adapter.B)
        y = add(y, scale(delta, adapter.scaling))
    if flat:
        y = reshape(y, (y.shape[1],))
    return y


def attach_lora(model: "EncoderModel", config: LoraConfig, seed: int = 0) -> "EncoderModel":
    """Attach fresh adapters (A ~ N(0, init_std), B = 0) to every target map."""
    if config.r == 0:
        raise NoAdapters("LoRA rank 0 yields no adapters")
    if model.lora is not None:
        raise ValueError("adapters already attached")
    rng = np.random.default_rng(seed)
    cfg = model.config
    for layer in range(cfg.layers):
        for target in TARGETS:
            if target not in config.targets:
                continue
            fan_in, fan_out = target_dims(target, cfg.hidden, cfg.ff_dim)
            model.params[f"lora.{layer}.{target}.A"] = Tensor(
                rng.normal(0.0, config.init_std, size=(config.r, fan_in)))
            model.params[f"lora.{layer}.{target}.B"] = Tensor(np.zeros((fan_out, config.r)))
    model.lora = config
    return model


def adapter_for(model: "EncoderModel", layer: int, target: str) -> LoraAdapter | None:
    if model.lora is None or target not in model.lora.targets:
        return None
    return LoraAdapter(model.params[f"lora.{layer}.{target}.A"],
                       model.params[f"lora.{layer}.{target}.B"],
                       model.lora.scaling, model.lora.dropout)


def is_lora_param(name: str) -> bool:
    return name.startswith("lora.")


def freeze_base_enable_lora(model: "EncoderModel") -> dict[str, bool]:
    """Freeze everything except adapters and the projection head.

    Returns the per-parameter trainable mask.
    """
    if model.lora is None:
        raise NoAdapters("no adapters attached")
    mask = {}
    for name, p in model.params.items():
        trainable = is_lora_param(name) or name.startswith("projection.")
        p.requires_grad = trainable
        mask[name] = trainable
    return mask


def merge_lora(model: "EncoderModel") -> "EncoderModel":
    """Fold ``scaling * B @ A`` into each base weight and drop the adapters."""
    if model.lora is None:
        raise NoAdapters("no adapters attached")
    cfg = model.lora
    for layer in range(model.config.layers):
        for target in sorted(cfg.targets):
            A = model.params.pop(f"lora.{layer}.{target}.A")
            B = model.params.pop(f"lora.{layer}.{target}.B")
            W = model.params[f"layers.{layer}.{TARGET_PREFIX[target]}.weight"]
            W.data = W.data + cfg.scaling * (B.data @ A.data)
    model.lora = None
    return model
