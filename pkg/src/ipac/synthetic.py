"""Seeded synthetic corpora for smoke runs and acceptance checks.

The cognate corpus pairs random "English" phoneme strings with a target
language obtained through a fixed symbol-substitution cipher, so a model can
only align the two sides by learning the cipher.
"""

from __future__ import annotations

import numpy as np

from .data import LANGUAGES, CognatePairRecord, TaggedSentence

# 40 IPA segments used by the synthetic corpora
IPA_INVENTORY = (
    "p", "b", "t", "d", "k", "ɡ", "m", "n", "ŋ", "f",
    "v", "θ", "ð", "s", "z", "ʃ", "ʒ", "h", "tʃ", "dʒ",
    "l", "r", "j", "w", "ɹ", "ʔ", "x", "ɲ", "i", "ɪ",
    "e", "ɛ", "æ", "a", "ɑ", "ɔ", "o", "ʊ", "u", "ə",
)

TABLE1_COUNTS = {"swa": 27, "ind": 86, "hin": 128, "cmn": 6, "ara": 34,
                 "vie": 10, "tha": 31, "tam": 71, "tur": 52, "kor": 7521}


def make_cipher(seed: int, n_symbols: int = 40) -> dict[str, str]:
    """A random permutation of the first ``n_symbols`` inventory symbols with no fixed points."""
    symbols = list(IPA_INVENTORY[:n_symbols])
    rng = np.random.default_rng(seed)
    while True:
        perm = rng.permutation(len(symbols))
        if not np.any(perm == np.arange(len(symbols))):
            return {symbols[i]: symbols[j] for i, j in enumerate(perm)}


def random_word(rng: np.random.Generator, symbols, min_len: int = 3, max_len: int = 7) -> list[str]:
    n = int(rng.integers(min_len, max_len + 1))
    return [symbols[int(k)] for k in rng.integers(0, len(symbols), size=n)]


def make_cipher_corpus(n_train: int = 200, n_heldout: int = 40, n_symbols: int = 40,
                       langs=("kor",), seed: int = 0, min_len: int = 3, max_len: int = 7
                       ) -> tuple[list[CognatePairRecord], list[CognatePairRecord]]:
    """Train and held-out cognate pairs; each target language has its own cipher.

    Pairs are spread round-robin across ``langs``; held-out English words never
    occur in the training split.
    """
    symbols = IPA_INVENTORY[:n_symbols]
    ciphers = {lang: make_cipher(seed * 1009 + LANGUAGES.index(lang), n_symbols) for lang in langs}
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    records = []
    while len(records) < n_train + n_heldout:
        word = random_word(rng, symbols, min_len, max_len)
        key = " ".join(word)
        if key in seen:
            continue
        seen.add(key)
        lang = langs[len(records) % len(langs)]
        target = [ciphers[lang][s] for s in word]
        k = len(records)
        records.append(CognatePairRecord(lang, f"{lang}{k:05d}", f"w{k:05d}", " ".join(target), key))
    return records[:n_train], records[n_train:]


def table1_fixture(seed: int = 0) -> list[CognatePairRecord]:
    """Records with exactly the published per-language counts of the real pair corpus."""
    rng = np.random.default_rng(seed)
    records = []
    for lang in LANGUAGES:
        for k in range(TABLE1_COUNTS[lang]):
            word = random_word(rng, IPA_INVENTORY)
            records.append(CognatePairRecord(lang, f"{lang}{k}", f"{lang}-en{k}",
                                             " ".join(reversed(word)), " ".join(word)))
    return records


def make_ner_corpus(n_sentences: int = 200, seed: int = 0, min_words: int = 3, max_words: int = 8
                    ) -> list[TaggedSentence]:
    """Sentences whose words are IPA strings; entity words carry a type-specific onset.

    PER words start with ``m``, ORG words with ``k`` and LOC words with ``l``;
    multi-word entities continue with ordinary words. Words are stored as
    space-separated IPA, which the CoNLL reader accepts since it splits on tabs.
    """
    rng = np.random.default_rng(seed)
    onsets = {"PER": "m", "ORG": "k", "LOC": "l"}
    plain = [s for s in IPA_INVENTORY if s not in onsets.values()]
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_words, max_words + 1))
        words, tags = [], []
        while len(words) < n:
            if rng.random() < 0.35:
                kind = ("PER", "ORG", "LOC")[int(rng.integers(0, 3))]
                span = int(rng.integers(1, 3))
                for j in range(span):
                    if len(words) >= n:
                        break
                    body = random_word(rng, plain, 2, 4)
                    words.append(" ".join(([onsets[kind]] if j == 0 else []) + body))
                    tags.append(("B-" if j == 0 else "I-") + kind)
            else:
                words.append(" ".join(random_word(rng, plain, 2, 5)))
                tags.append("O")
        sentences.append(TaggedSentence(tuple(words), tuple(tags)))
    return sentences
