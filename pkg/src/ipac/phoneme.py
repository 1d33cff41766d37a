"""IPA segmentation, phoneme vocabularies and table-driven grapheme-to-phoneme lookup."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCorpus, ParseError, UnknownWord

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")
N_SPECIALS = len(SPECIALS)


@dataclass(frozen=True)
class PhonemeSequence:
    segments: tuple[str, ...]
    ids: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.segments)


def tokenize(ipa_text: str) -> list[str]:
    """Split a space-separated IPA string into segments."""
    return ipa_text.split()


class Vocabulary:
    """Bijective map between phoneme segments and integer ids.

    Ids 0-3 are reserved for PAD, UNK, BOS and EOS; corpus symbols start at 4.
    Instances are treated as immutable.
    """

    def __init__(self, symbols: Sequence[str]):
        symbols = list(symbols)
        seen = set()
        for s in symbols:
            if not s or any(c.isspace() for c in s):
                raise ValueError(f"invalid vocabulary symbol {s!r}")
            if s in seen or s in SPECIALS:
                raise ValueError(f"duplicate vocabulary symbol {s!r}")
            seen.add(s)
        self.id_to_symbol: tuple[str, ...] = SPECIALS + tuple(symbols)
        self.symbol_to_id: dict[str, int] = {s: i for i, s in enumerate(self.id_to_symbol)}

    @property
    def symbols(self) -> tuple[str, ...]:
        """Corpus symbols in id order, specials excluded."""
        return self.id_to_symbol[N_SPECIALS:]

    def __len__(self) -> int:
        return len(self.id_to_symbol)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_symbol == other.id_to_symbol

    def __hash__(self) -> int:
        return hash(self.id_to_symbol)

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.symbols)} symbols)"

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(s + "\n" for s in self.symbols), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls([line for line in text.split("\n") if line])


def build_vocab(corpus: Iterable[Sequence[str] | PhonemeSequence]) -> Vocabulary:
    """Build a vocabulary ordered by descending frequency, ties broken lexicographically."""
    counts: Counter[str] = Counter()
    for seq in corpus:
        segs = seq.segments if isinstance(seq, PhonemeSequence) else seq
        counts.update(segs)
    if not counts:
        raise EmptyCorpus("no phoneme segments in corpus")
    ordered = sorted(counts, key=lambda s: (-counts[s], s))
    return Vocabulary([s for s in ordered if s not in SPECIALS])


def encode(segments: Sequence[str], vocab: Vocabulary, add_sentinels: bool = True) -> list[int]:
    ids = [vocab.symbol_to_id.get(s, UNK) for s in segments]
    if add_sentinels:
        return [BOS, *ids, EOS]
    return ids


def decode(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    """Map ids back to segments, dropping sentinels and padding."""
    return [vocab.id_to_symbol[i] for i in ids if i not in (PAD, BOS, EOS)]


def to_sequence(ipa_text: str, vocab: Vocabulary) -> PhonemeSequence:
    segs = tokenize(ipa_text)
    return PhonemeSequence(tuple(segs), tuple(encode(segs, vocab, add_sentinels=False)))


@dataclass(frozen=True)
class G2PTable:
    """Per-language grapheme to IPA lookup table."""

    entries: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def languages(self) -> list[str]:
        return sorted(self.entries)

    def keys(self, lang: str) -> list[str]:
        return list(self.entries.get(lang, {}))

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> "G2PTable":
        entries: dict[str, dict[str, str]] = {}
        for lang, grapheme, ipa in rows:
            entries.setdefault(lang, {})[grapheme] = ipa
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "G2PTable":
        """Read a ``lang<TAB>grapheme<TAB>ipa`` file; ``#`` lines are comments."""
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or not all(parts):
                    raise ParseError(lineno, "expected lang<TAB>grapheme<TAB>ipa")
                if not tokenize(parts[2]):
                    raise ParseError(lineno, "empty IPA field")
                rows.append((parts[0], parts[1], parts[2]))
        return cls.from_rows(rows)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for lang in sorted(self.entries):
                for grapheme, ipa in self.entries[lang].items():
                    fh.write(f"{lang}\t{grapheme}\t{ipa}\n")


def g2p_lookup(word: str, lang: str, table: G2PTable) -> str:
    try:
        return table.entries[lang][word]
    except KeyError:
        raise UnknownWord(word, lang) from None
