"""Post-LayerNorm transformer encoder over phoneme ids, with projection and NER heads."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import lora as _lora
from .errors import AlreadyStripped, EmptySequence, ProjectionRemoved, SequenceTooLong
from .numerics import (
    Tensor,
    add,
    concat,
    dropout,
    embedding_lookup,
    gelu,
    l2_normalize_rows,
    layer_norm,
    linear,
    matmul,
    mean_rows,
    reshape,
    row_softmax,
    scale,
    slice_,
    transpose,
)
from .phoneme import BOS, EOS, PAD, PhonemeSequence

NUM_TAGS = 7
COMPONENTS = ("base", "lora", "projection", "ner_head")


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden: int = 32
    heads: int = 2
    ff_dim: int = 64
    vocab_size: int = 44
    max_positions: int = 128
    dropout: float = 0.1
    proj_dim: int = 64
    num_tags: int = NUM_TAGS
    pooling: str = "mean"
    layer_norm_eps: float = 1e-12
    init_std: float = 0.02

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.proj_dim < 1:
            raise ValueError("proj_dim must be >= 1")
        if self.num_tags != NUM_TAGS:
            raise ValueError(f"num_tags is fixed at {NUM_TAGS}")
        if self.pooling not in ("mean", "first"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for name in ("layers", "hidden", "heads", "ff_dim", "vocab_size", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def bert_base(cls, vocab_size: int = 1969, max_positions: int = 514) -> "EncoderConfig":
        return cls(layers=12, hidden=768, heads=12, ff_dim=3072, vocab_size=vocab_size,
                   max_positions=max_positions, dropout=0.1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ------------------------------------------------------------ parameter layout

def param_shapes(config: EncoderConfig, lora: _lora.LoraConfig | None = None,
                 projection: bool = True) -> dict[str, tuple[int, ...]]:
    """Ordered manifest of every parameter the model allocates."""
    H, F = config.hidden, config.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, H),
        "embeddings.position": (config.max_positions, H),
        "embeddings.ln.gamma": (H,),
        "embeddings.ln.beta": (H,),
    }
    for i in range(config.layers):
        p = f"layers.{i}"
        for t in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{t}.weight"] = (H, H)
            shapes[f"{p}.attn.{t}.bias"] = (H,)
        shapes[f"{p}.ln1.gamma"] = (H,)
        shapes[f"{p}.ln1.beta"] = (H,)
        shapes[f"{p}.ff.up.weight"] = (F, H)
        shapes[f"{p}.ff.up.bias"] = (F,)
        shapes[f"{p}.ff.down.weight"] = (H, F)
        shapes[f"{p}.ff.down.bias"] = (H,)
        shapes[f"{p}.ln2.gamma"] = (H,)
        shapes[f"{p}.ln2.beta"] = (H,)
    if projection:
        shapes["projection.weight"] = (config.proj_dim, H)
        shapes["projection.bias"] = (config.proj_dim,)
    shapes["ner_head.weight"] = (config.num_tags, H)
    shapes["ner_head.bias"] = (config.num_tags,)
    if lora is not None and lora.r > 0:
        for i in range(config.layers):
            for t in _lora.TARGETS:
                if t in lora.targets:
                    fan_in, fan_out = _lora.target_dims(t, H, F)
                    shapes[f"lora.{i}.{t}.A"] = (lora.r, fan_in)
                    shapes[f"lora.{i}.{t}.B"] = (fan_out, lora.r)
    return shapes


def component_of(name: str) -> str:
    if name.startswith("lora."):
        return "lora"
    if name.startswith("projection."):
        return "projection"
    if name.startswith("ner_head."):
        return "ner_head"
    return "base"


def count_params(config: EncoderConfig, include: Iterable[str] = ("base",),
                 lora: _lora.LoraConfig | None = None) -> int:
    """Closed-form parameter count of the requested components."""
    include = set(include)
    unknown = include - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components {sorted(unknown)}")
    H, F, L = config.hidden, config.ff_dim, config.layers
    total = 0
    if "base" in include:
        embeddings = (config.vocab_size + config.max_positions) * H + 2 * H
        per_layer = 4 * (H * H + H) + (H * F + F) + (F * H + H) + 4 * H
        total += embeddings + L * per_layer
    if "lora" in include and lora is not None:
        per_layer = sum(_lora.lora_param_count(lora.r, *_lora.target_dims(t, H, F))
                        for t in lora.targets)
        total += L * per_layer
    if "projection" in include:
        total += H * config.proj_dim + config.proj_dim
    if "ner_head" in include:
        total += H * config.num_tags + config.num_tags
    return total


def trainable_count(config: EncoderConfig, lora: _lora.LoraConfig) -> int:
    """Trainable parameters during contrastive fine-tuning (adapters + projection)."""
    shapes = param_shapes(config, lora)
    return sum(int(np.prod(s)) for n, s in shapes.items()
               if component_of(n) in ("lora", "projection"))


# ----------------------------------------------------------------- the model

class EncoderModel:
    """Parameter store plus configuration; the forward functions below read it."""

    def __init__(self, config: EncoderConfig, params: dict[str, Tensor],
                 lora: _lora.LoraConfig | None = None, projection_active: bool = True):
        self.config = config
        self.params = params
        self.lora = lora
        self.projection_active = projection_active

    @classmethod
    def build(cls, config: EncoderConfig, seed: int = 0) -> "EncoderModel":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            if name.endswith(".gamma"):
                data = np.ones(shape)
            elif name.endswith((".bias", ".beta")):
                data = np.zeros(shape)
            else:
                data = rng.normal(0.0, config.init_std, size=shape)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(config, params)

    def num_params(self, component: str | None = None) -> int:
        return sum(p.size for n, p in self.params.items()
                   if component is None or component_of(n) == component)

    def trainable(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def set_trainable(self, names: Iterable[str] | None = None) -> None:
        """Make exactly ``names`` trainable (all parameters when ``None``)."""
        names = set(self.params) if names is None else set(names)
        for n, p in self.params.items():
            p.requires_grad = n in names

    def state_hash(self, component: str | None = None) -> str:
        h = hashlib.sha256()
        for n in sorted(self.params):
            if component is None or component_of(n) == component:
                h.update(n.encode())
                h.update(np.ascontiguousarray(self.params[n].data).tobytes())
        return h.hexdigest()

    def copy(self) -> "EncoderModel":
        params = {}
        for n, p in self.params.items():
            params[n] = Tensor(p.data.copy(), requires_grad=p.requires_grad, name=n)
        return EncoderModel(self.config, params, self.lora, self.projection_active)


class _Seeds:
    """Hands out dropout seeds from a generator; inactive outside training."""

    def __init__(self, rng: np.random.Generator | None, active: bool):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.active = active

    def next(self) -> int:
        return int(self.rng.integers(0, 2**63 - 1))


def _drop(x: Tensor, p: float, seeds: _Seeds) -> Tensor:
    if not seeds.active or p == 0.0:
        return x
    return dropout(x, p, seeds.next())


def _linear(model: EncoderModel, layer: int, target: str, x: Tensor, seeds: _Seeds) -> Tensor:
    prefix = f"layers.{layer}.{_lora.TARGET_PREFIX[target]}"
    W = model.params[prefix + ".weight"]
    b = model.params[prefix + ".bias"]
    adapter = _lora.adapter_for(model, layer, target)
    if adapter is None:
        return linear(x, W, b)
    seed = seeds.next() if seeds.active and adapter.dropout > 0 else 0
    return _lora.lora_forward(W, b, adapter, x, train_mode=seeds.active, seed=seed)


def _attention(model: EncoderModel, layer: int, x: Tensor, seeds: _Seeds) -> Tensor:
    cfg = model.config
    d = cfg.hidden // cfg.heads
    q = _linear(model, layer, "q", x, seeds)
    k = _linear(model, layer, "k", x, seeds)
    v = _linear(model, layer, "v", x, seeds)
    heads = []
    for h in range(cfg.heads):
        qh = slice_(q, h * d, (h + 1) * d, axis=1)
        kh = slice_(k, h * d, (h + 1) * d, axis=1)
        vh = slice_(v, h * d, (h + 1) * d, axis=1)
        probs = row_softmax(scale(matmul(qh, transpose(kh)), 1.0 / math.sqrt(d)))
        probs = _drop(probs, cfg.dropout, seeds)
        heads.append(matmul(probs, vh))
    ctx = heads[0] if len(heads) == 1 else concat(heads, axis=1)
    return _linear(model, layer, "o", ctx, seeds)


def forward_tokens(model: EncoderModel, ids: Sequence[int], train_mode: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Contextual vectors, one row per input id."""
    cfg = model.config
    ids = list(ids)
    if len(ids) > cfg.max_positions:
        raise SequenceTooLong(f"{len(ids)} ids exceed max_positions={cfg.max_positions}")
    if not ids:
        raise EmptySequence("cannot encode an empty id list")
    seeds = _Seeds(rng, train_mode)
    P = model.params
    x = add(embedding_lookup(P["embeddings.token"], ids),
            embedding_lookup(P["embeddings.position"], range(len(ids))))
    x = layer_norm(x, P["embeddings.ln.gamma"], P["embeddings.ln.beta"], cfg.layer_norm_eps)
    x = _drop(x, cfg.dropout, seeds)
    for i in range(cfg.layers):
        pre = f"layers.{i}"
        attn = _drop(_attention(model, i, x, seeds), cfg.dropout, seeds)
        x = layer_norm(add(x, attn), P[f"{pre}.ln1.gamma"], P[f"{pre}.ln1.beta"], cfg.layer_norm_eps)
        ff = gelu(_linear(model, i, "ff_up", x, seeds))
        ff = _drop(_linear(model, i, "ff_down", ff, seeds), cfg.dropout, seeds)
        x = layer_norm(add(x, ff), P[f"{pre}.ln2.gamma"], P[f"{pre}.ln2.beta"], cfg.layer_norm_eps)
    return x


def _content_ids(seq: PhonemeSequence | Sequence[int]) -> list[int]:
    ids = list(seq.ids) if isinstance(seq, PhonemeSequence) else list(seq)
    if ids and ids[0] == BOS:
        ids = ids[1:]
    if ids and ids[-1] == EOS:
        ids = ids[:-1]
    return ids


def pool(model: EncoderModel, hidden: Tensor, ids: Sequence[int]) -> Tensor:
    """Pool token vectors into one ``1 x hidden`` row."""
    if model.config.pooling == "first":
        return slice_(hidden, 0, 1, axis=0)
    mask = [0.0 if i in (PAD, BOS, EOS) else 1.0 for i in ids]
    return mean_rows(hidden, mask)


def embed_rows(model: EncoderModel, seqs: Sequence[PhonemeSequence | Sequence[int]],
               train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Unit-norm projected embeddings of several sequences, one row each."""
    if not model.projection_active:
        raise ProjectionRemoved("the projection head has been removed")
    rows = []
    for seq in seqs:
        content = _content_ids(seq)
        if not content:
            raise EmptySequence("cannot embed a sequence without phoneme segments")
        ids = [BOS, *content, EOS]
        h = forward_tokens(model, ids, train_mode, rng)
        rows.append(pool(model, h, ids))
    pooled = rows[0] if len(rows) == 1 else concat(rows, axis=0)
    z = linear(pooled, model.params["projection.weight"], model.params["projection.bias"])
    return l2_normalize_rows(z)


def embed_word(model: EncoderModel, seq: PhonemeSequence | Sequence[int], train_mode: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    z = embed_rows(model, [seq], train_mode, rng)
    return reshape(z, (model.config.proj_dim,))


def ner_logits(model: EncoderModel, ids: Sequence[int], train_mode: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    h = forward_tokens(model, ids, train_mode, rng)
    return linear(h, model.params["ner_head.weight"], model.params["ner_head.bias"])


def strip_projection(model: EncoderModel) -> EncoderModel:
    """Remove the projection head for inference."""
    if not model.projection_active:
        raise AlreadyStripped("projection already removed")
    model.params.pop("projection.weight", None)
    model.params.pop("projection.bias", None)
    model.projection_active = False
    return model
