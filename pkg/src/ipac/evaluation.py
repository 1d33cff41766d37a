"""Span F1, cosine pair scoring, aggregate tables and embedding export."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import CognatePairRecord
from .encoder import EncoderModel, embed_rows
from .errors import LengthMismatch
from .phoneme import Vocabulary, encode, tokenize

Span = tuple[str, int, int]


def extract_spans(tags: Sequence[str]) -> set[Span]:
    """Maximal ``B-X (I-X)*`` runs as ``(type, start, end)`` with ``end`` inclusive."""
    spans = set()
    start, kind = None, None
    for i, tag in enumerate(list(tags) + ["O"]):
        continues = kind is not None and tag == "I-" + kind
        if continues:
            continue
        if kind is not None:
            spans.add((kind, start, i - 1))
            start, kind = None, None
        if tag.startswith("B-") or tag.startswith("I-"):
            start, kind = i, tag[2:]
    return spans


def spans_to_tags(spans: set[Span], length: int) -> list[str]:
    tags = ["O"] * length
    for kind, start, end in spans:
        tags[start] = "B-" + kind
        for i in range(start + 1, end + 1):
            tags[i] = "I-" + kind
    return tags


@dataclass(frozen=True)
class SpanScore:
    precision: float
    recall: float
    f1: float
    n_gold: int = 0
    n_pred: int = 0
    n_correct: int = 0


def span_f1(gold: Sequence[set[Span]], pred: Sequence[set[Span]]) -> SpanScore:
    """Micro-averaged exact-match span precision, recall and F1."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    n_gold = sum(len(g) for g in gold)
    n_pred = sum(len(p) for p in pred)
    correct = sum(len(set(g) & set(p)) for g, p in zip(gold, pred))
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SpanScore(precision, recall, f1, n_gold, n_pred, correct)


def tag_f1(gold_tags: Sequence[Sequence[str]], pred_tags: Sequence[Sequence[str]]) -> SpanScore:
    return span_f1([extract_spans(t) for t in gold_tags], [extract_spans(t) for t in pred_tags])


# --------------------------------------------------------------- aggregates

def aggregate_report(per_language: Mapping[str, float], population: bool = False) -> tuple[float, float]:
    """Mean and standard deviation across languages (sample std unless ``population``)."""
    values = list(per_language.values())
    if not values:
        raise ValueError("aggregate_report needs at least one language")
    mean = statistics.fmean(values)
    if population:
        return mean, statistics.pstdev(values)
    if len(values) < 2:
        raise ValueError("sample standard deviation is undefined for a single language")
    return mean, statistics.stdev(values)


def _summary(per_language: Mapping[str, float], population: bool) -> tuple[float, float]:
    # a lone language has no sample std; tables print it as nan instead of failing
    if len(per_language) == 1 and not population:
        return next(iter(per_language.values())), float("nan")
    return aggregate_report(per_language, population=population)


def format_table(per_language: Mapping[str, float], population: bool = False) -> str:
    """Aligned plain-text row of per-language scores followed by AVG and STD."""
    langs = list(per_language)
    mean, std = _summary(per_language, population)
    header = langs + ["AVG", "STD"]
    values = [f"{per_language[l]:.2f}" for l in langs] + [f"{mean:.2f}", f"{std:.2f}"]
    width = max(len(s) for s in header + values)
    return (" ".join(h.rjust(width) for h in header) + "\n"
            + " ".join(v.rjust(width) for v in values) + "\n")


def write_table_csv(path: str | Path, per_language: Mapping[str, float], population: bool = False) -> None:
    mean, std = _summary(per_language, population)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(per_language) + ["AVG", "STD"])
        w.writerow([f"{v:.4f}" for v in per_language.values()] + [f"{mean:.4f}", f"{std:.4f}"])


# ------------------------------------------------------------------ cosine

@dataclass(frozen=True)
class SimilarityRow:
    pair_id: int
    lang: str
    word_e: str
    word_t: str
    cosine: float

    @property
    def percent(self) -> float:
        return 100.0 * self.cosine


@dataclass
class SimilarityReport:
    rows: list[SimilarityRow]

    def mean(self, lang: str | None = None) -> float:
        vals = [r.cosine for r in self.rows if lang is None or r.lang == lang]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> dict[str, float]:
        """Mean cosine per language."""
        return {lang: self.mean(lang) for lang in sorted({r.lang for r in self.rows})}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pair_id", "lang", "word_e", "word_t", "cosine", "percent"])
            for r in self.rows:
                w.writerow([r.pair_id, r.lang, r.word_e, r.word_t, f"{r.cosine:.9g}", f"{r.percent:.2f}"])


@dataclass(frozen=True)
class PairInput:
    pair_id: int
    lang: str
    word_e: str
    word_t: str
    ipa_e: str
    ipa_t: str


def as_pair_inputs(pairs: Sequence) -> list[PairInput]:
    """Accept :class:`CognatePairRecord`, ``PairInput`` or ``(ipa_e, ipa_t)`` tuples."""
    out = []
    for i, p in enumerate(pairs):
        if isinstance(p, PairInput):
            out.append(p)
        elif isinstance(p, CognatePairRecord):
            out.append(PairInput(i, p.lang, p.g_e, p.g_t, p.i_e, p.i_t))
        else:
            ipa_e, ipa_t = p
            out.append(PairInput(i, "", ipa_e, ipa_t, ipa_e, ipa_t))
    return out


def model_embedder(model: EncoderModel, vocab: Vocabulary, batch: int = 64
                   ) -> Callable[[Sequence[str]], np.ndarray]:
    """Map a list of IPA strings to unit-norm projected embeddings (inference mode)."""

    def embed(ipas: Sequence[str]) -> np.ndarray:
        chunks = []
        for i in range(0, len(ipas), batch):
            seqs = [encode(tokenize(s), vocab, add_sentinels=True) for s in ipas[i:i + batch]]
            chunks.append(embed_rows(model, seqs, train_mode=False).data)
        return np.concatenate(chunks, axis=0)

    return embed


def cosine_pairs(model: EncoderModel | None, pairs: Sequence, vocab: Vocabulary | None = None,
                 embed: Callable[[Sequence[str]], np.ndarray] | None = None) -> SimilarityReport:
    """Cosine similarity of each English / target pair.

    ``embed`` overrides the model-based embedder and must return one row per
    input IPA string.
    """
    items = as_pair_inputs(pairs)
    if embed is None:
        embed = model_embedder(model, vocab)
    if not items:
        return SimilarityReport([])
    ze = np.asarray(embed([p.ipa_e for p in items]), dtype=np.float64)
    zt = np.asarray(embed([p.ipa_t for p in items]), dtype=np.float64)
    rows = [SimilarityRow(p.pair_id, p.lang, p.word_e, p.word_t, _cosine(a, b))
            for p, a, b in zip(items, ze, zt)]
    return SimilarityReport(sorted(rows, key=lambda r: r.pair_id))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(a @ b) / denom))


def mismatched_cosine(model: EncoderModel | None, pairs: Sequence, vocab: Vocabulary | None = None,
                      embed: Callable[[Sequence[str]], np.ndarray] | None = None) -> float:
    """Mean cosine between English item ``i`` and every target item ``k != i``."""
    items = as_pair_inputs(pairs)
    if len(items) < 2:
        raise ValueError("mismatched cosine needs at least two pairs")
    if embed is None:
        embed = model_embedder(model, vocab)
    ze = _unit(np.asarray(embed([p.ipa_e for p in items])))
    zt = _unit(np.asarray(embed([p.ipa_t for p in items])))
    sims = ze @ zt.T
    n = len(items)
    return float((sims.sum() - np.trace(sims)) / (n * (n - 1)))


def _unit(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def export_embeddings(model: EncoderModel | None, pairs: Sequence, path: str | Path,
                      vocab: Vocabulary | None = None,
                      embed: Callable[[Sequence[str]], np.ndarray] | None = None) -> None:
    """Write one CSV row per side per pair for an external t-SNE run."""
    items = as_pair_inputs(pairs)
    if embed is None:
        embed = model_embedder(model, vocab)
    ze = np.asarray(embed([p.ipa_e for p in items]))
    zt = np.asarray(embed([p.ipa_t for p in items]))
    dim = ze.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "lang", "side", "word"] + [f"dim_{j}" for j in range(dim)])
        for p, a, b in sorted(zip(items, ze, zt), key=lambda t: t[0].pair_id):
            w.writerow([p.pair_id, p.lang, "e", p.word_e] + [f"{v:.9g}" for v in a])
            w.writerow([p.pair_id, p.lang, "t", p.word_t] + [f"{v:.9g}" for v in b])


def read_embeddings(path: str | Path) -> dict[tuple[int, str], np.ndarray]:
    """Inverse of :func:`export_embeddings`: ``(pair_id, side) -> vector``."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out[(int(row[0]), row[2])] = np.array([float(v) for v in row[4:]])
    return out
