"""CONLIPA pair files, CoNLL NER corpora, sampling caps and batching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyField,
    EmptySentence,
    InvalidLang,
    LengthMismatch,
    ParseError,
    UnknownTag,
)
from .numerics import IGNORE_INDEX
from .phoneme import PhonemeSequence, tokenize

LANGUAGES = ("swa", "ind", "hin", "cmn", "ara", "vie", "tha", "tam", "tur", "kor")

TAGS = ("O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC")
TAG_TO_ID = {t: i for i, t in enumerate(TAGS)}
ENTITY_TYPES = ("PER", "ORG", "LOC")

CONLIPA_HEADER = ("lang", "grapheme_target", "grapheme_english", "ipa_target", "ipa_english")

DEFAULT_CAPS = {"kor": 512}


@dataclass(frozen=True)
class CognatePairRecord:
    lang: str
    g_t: str
    g_e: str
    i_t: str
    i_e: str


@dataclass(frozen=True)
class TaggedSentence:
    words: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) != len(self.tags):
            raise LengthMismatch(f"{len(self.words)} words but {len(self.tags)} tags")
        if not self.words:
            raise EmptySentence("a sentence needs at least one word")


@dataclass(frozen=True)
class SamplingPolicy:
    caps: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_CAPS))
    seed: int = 0

    def __post_init__(self):
        for lang, cap in self.caps.items():
            if cap < 0:
                raise ValueError(f"negative cap for {lang}")

    @classmethod
    def uncapped(cls, seed: int = 0) -> "SamplingPolicy":
        return cls(caps={}, seed=seed)


# ------------------------------------------------------------------ CONLIPA

def parse_conlipa(path: str | Path) -> list[CognatePairRecord]:
    """Parse every row of a CONLIPA TSV file without sampling."""
    records = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split("\t")
            if not header_seen:
                if tuple(parts) != CONLIPA_HEADER:
                    raise ParseError(lineno, "missing CONLIPA header")
                header_seen = True
                continue
            if len(parts) != 5:
                raise ParseError(lineno, f"expected 5 tab-separated fields, got {len(parts)}")
            lang, g_t, g_e, i_t, i_e = parts
            if lang not in LANGUAGES:
                raise InvalidLang(lineno, f"unknown language code {lang!r}")
            if not all(f.strip() for f in (g_t, g_e)) or not tokenize(i_t) or not tokenize(i_e):
                raise EmptyField(lineno)
            records.append(CognatePairRecord(lang, g_t, g_e, i_t, i_e))
    if not header_seen:
        raise ParseError(1, "empty CONLIPA file")
    return records


def apply_caps(records: Sequence[CognatePairRecord], policy: SamplingPolicy) -> list[CognatePairRecord]:
    """Keep at most ``cap`` records per capped language, chosen uniformly without replacement.

    Selected records keep their original file order.
    """
    by_lang: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_lang.setdefault(r.lang, []).append(i)
    keep = set(range(len(records)))
    for lang in sorted(by_lang):
        cap = policy.caps.get(lang)
        idx = by_lang[lang]
        if cap is None or cap >= len(idx):
            continue
        rng = np.random.default_rng([policy.seed, LANGUAGES.index(lang)])
        chosen = set(rng.choice(len(idx), size=cap, replace=False).tolist())
        keep -= {j for pos, j in enumerate(idx) if pos not in chosen}
    return [records[i] for i in sorted(keep)]


def language_counts(records: Sequence[CognatePairRecord]) -> dict[str, int]:
    counts = Counter(r.lang for r in records)
    return {lang: counts.get(lang, 0) for lang in LANGUAGES}


def load_conlipa(path: str | Path, policy: SamplingPolicy | None = None
                 ) -> tuple[list[CognatePairRecord], dict[str, int]]:
    """Load, validate and cap a CONLIPA file; returns records and per-language counts."""
    policy = SamplingPolicy() if policy is None else policy
    records = apply_caps(parse_conlipa(path), policy)
    return records, language_counts(records)


def write_conlipa(path: str | Path, records: Sequence[CognatePairRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(CONLIPA_HEADER) + "\n")
        for r in records:
            fh.write(f"{r.lang}\t{r.g_t}\t{r.g_e}\t{r.i_t}\t{r.i_e}\n")


# -------------------------------------------------------------------- CoNLL

def repair_iob(tags: Sequence[str]) -> list[str]:
    """Turn every I-X not preceded by B-X or I-X into B-X."""
    out = []
    prev = "O"
    for t in tags:
        if t.startswith("I-") and prev[2:] != t[2:]:
            t = "B-" + t[2:]
        out.append(t)
        prev = t
    return out


def is_valid_iob(tags: Sequence[str]) -> bool:
    prev = "O"
    for t in tags:
        if t.startswith("I-") and prev[2:] != t[2:]:
            return False
        prev = t
    return True


def load_conll(path: str | Path, strict: bool = False) -> list[TaggedSentence]:
    """Read ``token<TAB>tag`` lines; blank lines end sentences.

    Orphan I- tags are repaired to B- unless ``strict`` is set, in which case
    they raise :class:`UnknownTag`.
    """
    sentences = []
    words: list[str] = []
    tags: list[str] = []
    start = 1

    def flush():
        fixed = repair_iob(tags)
        if strict and fixed != tags:
            raise UnknownTag(start, "orphan I- tag in strict mode")
        sentences.append(TaggedSentence(tuple(words), tuple(fixed)))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                if words:
                    flush()
                    words, tags = [], []
                start = lineno + 1
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip():
                raise ParseError(lineno, "expected token<TAB>tag")
            if parts[1] not in TAG_TO_ID:
                raise UnknownTag(lineno, f"tag {parts[1]!r} is outside the 7-tag set")
            words.append(parts[0])
            tags.append(parts[1])
    if words:
        flush()
    if not sentences:
        raise EmptySentence(f"{path} contains no sentences")
    return sentences


def write_conll(path: str | Path, sentences: Sequence[TaggedSentence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            for w, t in zip(s.words, s.tags):
                fh.write(f"{w}\t{t}\n")
            fh.write("\n")


# ----------------------------------------------------------------- batching

def make_pair_batches(records: Sequence, batch_size: int, seed: int,
                      group_by_language: bool = False) -> Iterator[list[int]]:
    """Shuffle record indices with ``seed`` and yield fixed-size batches (last one may be short).

    With ``group_by_language`` each batch holds a single language; language
    blocks are themselves visited in shuffled order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    if not group_by_language:
        order = rng.permutation(len(records)).tolist()
        for i in range(0, len(order), batch_size):
            yield order[i:i + batch_size]
        return
    by_lang: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_lang.setdefault(r.lang, []).append(i)
    batches = []
    for lang in sorted(by_lang):
        idx = [by_lang[lang][j] for j in rng.permutation(len(by_lang[lang]))]
        batches += [idx[i:i + batch_size] for i in range(0, len(idx), batch_size)]
    for j in rng.permutation(len(batches)):
        yield batches[j]


def align_tags(sentence: TaggedSentence, encoded: Sequence[PhonemeSequence | Sequence],
               sentinels: bool = True) -> tuple[list[int], list[bool]]:
    """Token-level tag ids for a sentence encoded word by word.

    Each word's tag goes on its first phoneme token; later tokens of the word
    and the BOS/EOS sentinels get ``IGNORE_INDEX``. Returns ``(labels, mask)``
    where ``mask[i]`` is True for positions that are ignored.
    """
    if len(encoded) != len(sentence.words):
        raise LengthMismatch(f"{len(encoded)} encodings for {len(sentence.words)} words")
    labels = [IGNORE_INDEX] if sentinels else []
    for tag, enc in zip(sentence.tags, encoded):
        n = len(enc)
        if n == 0:
            raise LengthMismatch("every word must encode to at least one phoneme")
        labels.append(TAG_TO_ID[tag])
        labels.extend([IGNORE_INDEX] * (n - 1))
    if sentinels:
        labels.append(IGNORE_INDEX)
    return labels, [lab == IGNORE_INDEX for lab in labels]
