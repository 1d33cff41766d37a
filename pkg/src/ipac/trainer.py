"""Two-phase training: supervised NER, then frozen-base contrastive fine-tuning."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import subprocess
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .contrastive import PairBatch, ipac_loss
from .data import TAGS, CognatePairRecord, TaggedSentence, align_tags, make_pair_batches
from .encoder import EncoderModel, embed_rows, ner_logits, strip_projection
from .errors import NoAdapters, NonPositiveTemperature, NumericalError
from .lora import freeze_base_enable_lora, merge_lora
from .numerics import Tensor, backward, concat, cross_entropy
from .phoneme import BOS, EOS, G2PTable, Vocabulary, encode, g2p_lookup, tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 0.01
    warmup_ratio: float = 0.0025
    batch_size: int = 128
    max_seq: int = 128
    ipac_epochs: int = 2
    ner_epochs: int = 3
    temperature: float = 0.1
    seed: int = 0
    korean_cap: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.0
    group_by_language: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.temperature > 0:
            raise NonPositiveTemperature(f"temperature must be positive, got {self.temperature}")
        if self.max_seq < 3:
            raise ValueError("max_seq must leave room for sentinels and one phoneme")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ------------------------------------------------------------------ schedule

def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    return math.ceil(total_steps * warmup_ratio)


def lr_at(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear warmup to ``base_lr`` then linear decay to zero at ``total_steps``."""
    warm = warmup_steps(total_steps, warmup_ratio)
    if step < warm:
        return base_lr * step / warm
    return base_lr * max(0.0, (total_steps - step) / max(1, total_steps - warm))


# ----------------------------------------------------------------- optimizer

class AdamW:
    """Adam with decoupled weight decay; moments are keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            data = p.data * (1.0 - lr * self.weight_decay)
            p.data = data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"optim.m.{name}"] = self.m[name]
            out[f"optim.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        self.m = {k[len("optim.m."):]: v.copy() for k, v in tensors.items() if k.startswith("optim.m.")}
        self.v = {k[len("optim.v."):]: v.copy() for k, v in tensors.items() if k.startswith("optim.v.")}


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    params = [p for p in params if p.grad is not None]
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    if max_norm > 0 and total > max_norm:
        for p in params:
            p.grad = p.grad * (max_norm / (total + 1e-12))
    return total


# ---------------------------------------------------------------- state/run

@dataclass
class TrainState:
    phase: str
    step: int = 0
    total_steps: int = 0
    seed: int = 0
    best_loss: float = math.inf
    losses: list[float] = field(default_factory=list)

    def to_meta(self) -> dict:
        return {"phase": self.phase, "step": self.step, "total_steps": self.total_steps,
                "seed": self.seed, "best_loss": None if math.isinf(self.best_loss) else self.best_loss,
                "losses": [float.hex(x) for x in self.losses]}

    @classmethod
    def from_meta(cls, d: dict) -> "TrainState":
        best = d.get("best_loss")
        return cls(d["phase"], d["step"], d["total_steps"], d["seed"],
                   math.inf if best is None else best,
                   [float.fromhex(x) for x in d.get("losses", [])])


@dataclass
class TrainResult:
    model: EncoderModel
    state: TrainState
    optimizer: AdamW
    checkpoints: list[Path] = field(default_factory=list)


def step_rng(seed: int, phase: str, step: int) -> np.random.Generator:
    """Dropout randomness for one step, a pure function of (seed, phase, step)."""
    return np.random.default_rng([seed, 1 if phase == "ner" else 2, step])


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _save_state(path: Path, model: EncoderModel, vocab: Vocabulary | None, opt: AdamW,
                state: TrainState, config: TrainConfig) -> None:
    meta = {"train_state": state.to_meta(), "train_config": config.to_dict()}
    save_checkpoint(path, model, vocab, extra_tensors=opt.state_tensors(), meta=meta, dtype="float64")


def load_resume_state(path: str | Path) -> tuple[EncoderModel, Vocabulary | None, AdamW, TrainState, TrainConfig]:
    """Restore everything needed to continue a run from a ``.state`` checkpoint."""
    ck = load_checkpoint(path)
    state = TrainState.from_meta(ck.meta["train_state"])
    config = TrainConfig.from_dict(ck.meta["train_config"])
    opt = AdamW(config.lr, (config.beta1, config.beta2), config.eps, config.weight_decay)
    opt.load_state_tensors(ck.extra_tensors, state.step)
    return ck.model, ck.vocab, opt, state, config


def _run(model: EncoderModel, vocab: Vocabulary | None, phase: str, n_items: int, epochs: int,
         config: TrainConfig, loss_for_batch: Callable[[list[int], np.random.Generator], Tensor],
         batches_for_epoch: Callable[[int], list[list[int]]], out_dir: Path | None,
         max_steps: int | None, save_every: int, resume: tuple[AdamW, TrainState] | None,
         on_step: Callable[[int, float], None] | None) -> TrainResult:
    steps_per_epoch = len(batches_for_epoch(0))
    total = steps_per_epoch * epochs
    if resume is None:
        opt = AdamW(config.lr, (config.beta1, config.beta2), config.eps, config.weight_decay)
        state = TrainState(phase, 0, total, config.seed)
    else:
        opt, state = resume
        if state.total_steps != total or state.phase != phase:
            raise ValueError("resume state does not match this run's schedule")
    stop = total if max_steps is None else min(total, max_steps)
    trainable = model.trainable()
    written: list[Path] = []
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_lines = [f"{i}\t{x!r}\n" for i, x in enumerate(state.losses)]
    epoch_losses: list[float] = []
    batches: list[list[int]] = []
    cur_epoch = -1
    while state.step < stop:
        epoch, pos = divmod(state.step, steps_per_epoch)
        if epoch != cur_epoch:
            batches = batches_for_epoch(epoch)
            cur_epoch = epoch
            epoch_losses = []
        lr = lr_at(state.step, total, config.lr, config.warmup_ratio)
        try:
            loss = loss_for_batch(batches[pos], step_rng(config.seed, phase, state.step))
            backward(loss)
            if config.grad_clip > 0:
                clip_grad_norm(trainable.values(), config.grad_clip)
            opt.step(trainable, lr)
        except NumericalError:
            log.error("%s: non-finite value at step %d; last good checkpoint kept", phase, state.step)
            raise
        finally:
            model.zero_grad()
        value = loss.item()
        state.losses.append(value)
        epoch_losses.append(value)
        log_lines.append(f"{state.step}\t{value!r}\n")
        if on_step is not None:
            on_step(state.step, value)
        state.step += 1
        if state.step % steps_per_epoch == 0:
            mean = float(np.mean(epoch_losses))
            state.best_loss = min(state.best_loss, mean)
            log.info("%s epoch %d mean loss %.6f", phase, epoch + 1, mean)
            if out_dir is not None:
                path = out_dir / f"{phase}-epoch{epoch + 1}.ipac"
                save_checkpoint(path, model, vocab)
                written.append(path)
        if out_dir is not None and save_every and state.step % save_every == 0:
            path = out_dir / f"{phase}-step{state.step}.state"
            _save_state(path, model, vocab, opt, state, config)
            written.append(path)
    if out_dir is not None:
        (out_dir / f"{phase}-loss.tsv").write_text("".join(log_lines), encoding="utf-8")
        path = out_dir / f"{phase}-final.state"
        _save_state(path, model, vocab, opt, state, config)
        written.append(path)
    return TrainResult(model, state, opt, written)


# ---------------------------------------------------------------- NER phase

@dataclass(frozen=True)
class NerExample:
    ids: tuple[int, ...]
    labels: tuple[int, ...]


def word_segments(word: str, g2p: G2PTable | None = None, lang: str | None = None) -> list[str]:
    """Phoneme segments of one corpus word: via the G2P table when given, else the word is IPA."""
    if g2p is not None:
        return tokenize(g2p_lookup(word, lang or "eng", g2p))
    return tokenize(word)


def prepare_ner_examples(sentences: Sequence[TaggedSentence], vocab: Vocabulary, max_seq: int = 128,
                         g2p: G2PTable | None = None, lang: str | None = None) -> list[NerExample]:
    """Encode sentences as ``[BOS, word phonemes..., EOS]`` with first-token labels.

    Sentences longer than ``max_seq`` are truncated at a word boundary.
    """
    out = []
    for s in sentences:
        per_word = [encode(word_segments(w, g2p, lang), vocab, add_sentinels=False) for w in s.words]
        labels, _ = align_tags(s, per_word)
        ids = [BOS] + [i for w in per_word for i in w] + [EOS]
        if len(ids) > max_seq:
            ids = ids[:max_seq - 1] + [EOS]
            labels = labels[:max_seq - 1] + [labels[-1]]
        out.append(NerExample(tuple(ids), tuple(labels)))
    return out


def ner_batch_loss(model: EncoderModel, examples: Sequence[NerExample], train_mode: bool = True,
                   rng: np.random.Generator | None = None) -> Tensor:
    logits = [ner_logits(model, ex.ids, train_mode, rng) for ex in examples]
    stacked = logits[0] if len(logits) == 1 else concat(logits, axis=0)
    targets = [lab for ex in examples for lab in ex.labels]
    return cross_entropy(stacked, targets)


def train_ner(model: EncoderModel, examples: Sequence[NerExample], config: TrainConfig,
              vocab: Vocabulary | None = None, out_dir: str | Path | None = None,
              epochs: int | None = None, max_steps: int | None = None, save_every: int = 0,
              resume: tuple[AdamW, TrainState] | None = None,
              on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Token-level cross-entropy training of the encoder and NER head."""
    if not examples:
        raise ValueError("no NER examples")
    if resume is None:
        model.set_trainable(n for n in model.params
                            if not n.startswith(("projection.", "lora.")))
    epochs = config.ner_epochs if epochs is None else epochs

    def batches(epoch: int) -> list[list[int]]:
        return list(make_pair_batches(examples, config.batch_size, epoch_seed(config.seed, epoch)))

    def loss_for(idx: list[int], rng: np.random.Generator) -> Tensor:
        return ner_batch_loss(model, [examples[i] for i in idx], True, rng)

    return _run(model, vocab, "ner", len(examples), epochs, config, loss_for, batches,
                None if out_dir is None else Path(out_dir), max_steps, save_every, resume, on_step)


# --------------------------------------------------------------- IPAC phase

def encode_pairs(records: Sequence[CognatePairRecord], vocab: Vocabulary, max_seq: int = 128
                 ) -> tuple[list[list[int]], list[list[int]]]:
    def enc(ipa: str) -> list[int]:
        ids = encode(tokenize(ipa), vocab, add_sentinels=True)
        return ids if len(ids) <= max_seq else ids[:max_seq - 1] + [EOS]

    return [enc(r.i_e) for r in records], [enc(r.i_t) for r in records]


def ipac_batch_loss(model: EncoderModel, seqs_e: Sequence[Sequence[int]], seqs_t: Sequence[Sequence[int]],
                    temperature: float, train_mode: bool = True,
                    rng: np.random.Generator | None = None) -> Tensor:
    z_e = embed_rows(model, seqs_e, train_mode, rng)
    z_t = embed_rows(model, seqs_t, train_mode, rng)
    return ipac_loss(PairBatch(z_e, z_t, temperature))


def train_ipac(model: EncoderModel, records: Sequence[CognatePairRecord], vocab: Vocabulary,
               config: TrainConfig, out_dir: str | Path | None = None, epochs: int | None = None,
               max_steps: int | None = None, save_every: int = 0,
               resume: tuple[AdamW, TrainState] | None = None,
               on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Contrastive fine-tuning of adapters and projection; everything else stays frozen."""
    if model.lora is None:
        raise NoAdapters("attach LoRA adapters before contrastive training")
    if not config.temperature > 0:
        raise NonPositiveTemperature(str(config.temperature))
    if not records:
        raise ValueError("no contrastive pairs")
    freeze_base_enable_lora(model)
    seqs_e, seqs_t = encode_pairs(records, vocab, config.max_seq)
    epochs = config.ipac_epochs if epochs is None else epochs

    def batches(epoch: int) -> list[list[int]]:
        return list(make_pair_batches(records, config.batch_size, epoch_seed(config.seed, epoch),
                                      group_by_language=config.group_by_language))

    def loss_for(idx: list[int], rng: np.random.Generator) -> Tensor:
        return ipac_batch_loss(model, [seqs_e[i] for i in idx], [seqs_t[i] for i in idx],
                               config.temperature, True, rng)

    return _run(model, vocab, "ipac", len(records), epochs, config, loss_for, batches,
                None if out_dir is None else Path(out_dir), max_steps, save_every, resume, on_step)


def finalize_for_inference(model: EncoderModel, merge: bool = False) -> EncoderModel:
    """Drop the projection head and optionally fold adapters into the base weights."""
    strip_projection(model)
    if merge:
        merge_lora(model)
    return model


def predict_tags(model: EncoderModel, examples: Sequence[NerExample]) -> list[list[str]]:
    """Argmax word-level tags, read at each word's first phoneme position."""
    out = []
    for ex in examples:
        pred = ner_logits(model, ex.ids).data.argmax(axis=1)
        out.append([TAGS[int(pred[i])] for i, lab in enumerate(ex.labels) if lab >= 0])
    return out


# ----------------------------------------------------------------- manifest

def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def write_manifest(out_dir: str | Path, config: dict, seed: int, data_files: Sequence[str | Path]) -> Path:
    manifest = {
        "config": config,
        "seed": seed,
        "git_describe": git_describe(),
        "data": {str(p): file_sha256(p) for p in data_files},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
