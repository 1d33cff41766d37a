from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipac.data import (
    CONLIPA_HEADER,
    LANGUAGES,
    TAG_TO_ID,
    TAGS,
    CognatePairRecord,
    SamplingPolicy,
    TaggedSentence,
    align_tags,
    apply_caps,
    is_valid_iob,
    load_conlipa,
    load_conll,
    make_pair_batches,
    parse_conlipa,
    repair_iob,
    write_conlipa,
    write_conll,
)
from ipac.errors import EmptyField, EmptySentence, InvalidLang, LengthMismatch, ParseError, UnknownTag
from ipac.numerics import IGNORE_INDEX
from ipac.synthetic import TABLE1_COUNTS, table1_fixture

TABLE1 = {"swa": 27, "ind": 86, "hin": 128, "cmn": 6, "ara": 34,
          "vie": 10, "tha": 31, "tam": 71, "tur": 52, "kor": 7521}


@pytest.fixture(scope="module")
def table1_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("conlipa") / "table1.tsv"
    write_conlipa(path, table1_fixture(seed=0))
    return path


def test_fixture_counts_match_table():
    assert dict(TABLE1_COUNTS) == TABLE1


def test_load_uncapped_counts(table1_file):
    records, counts = load_conlipa(table1_file, SamplingPolicy.uncapped())
    assert counts == TABLE1
    assert len(records) == sum(TABLE1.values()) == 7966


def test_default_policy_caps_korean(table1_file):
    records, counts = load_conlipa(table1_file)
    assert counts["kor"] == 512
    assert len(records) == 957 == 7966 - 7521 + 512


def test_capped_is_subset_with_exact_marginals(table1_file):
    full = parse_conlipa(table1_file)
    for cap in (0, 16, 300):
        capped = apply_caps(full, SamplingPolicy({"kor": cap, "hin": 100}, seed=4))
        assert set(capped) <= set(full)
        counts = Counter(r.lang for r in capped)
        assert counts.get("kor", 0) == cap and counts["hin"] == 100 and counts["swa"] == 27
        # selection keeps file order
        pos = {r: i for i, r in enumerate(full)}
        assert [pos[r] for r in capped] == sorted(pos[r] for r in capped)


def test_caps_deterministic_and_seed_sensitive(table1_file):
    full = parse_conlipa(table1_file)
    a = apply_caps(full, SamplingPolicy({"kor": 64}, seed=1))
    assert a == apply_caps(full, SamplingPolicy({"kor": 64}, seed=1))
    assert a != apply_caps(full, SamplingPolicy({"kor": 64}, seed=2))


def test_negative_cap_rejected():
    with pytest.raises(ValueError):
        SamplingPolicy({"kor": -1})


def test_conlipa_round_trip(table1_file, tmp_path):
    records = parse_conlipa(table1_file)
    out = tmp_path / "again.tsv"
    write_conlipa(out, records)
    assert parse_conlipa(out) == records
    assert out.read_bytes() == table1_file.read_bytes()


def _conlipa(tmp_path, body):
    path = tmp_path / "c.tsv"
    path.write_text("\t".join(CONLIPA_HEADER) + "\n" + body, encoding="utf-8")
    return path


def test_conlipa_comments_allowed(tmp_path):
    path = _conlipa(tmp_path, "# note\nkor\t서울\tSeoul\ts ʌ u l\ts oʊ l\n")
    assert parse_conlipa(path) == [CognatePairRecord("kor", "서울", "Seoul", "s ʌ u l", "s oʊ l")]


@pytest.mark.parametrize("body, err, line", [
    ("xxx\ta\tb\tc\td\n", InvalidLang, 2),
    ("kor\ta\tb\tc\n", ParseError, 2),
    ("kor\ta\t\tc\td\n", EmptyField, 2),
    ("kor\ta\tb\t  \td\n", EmptyField, 2),
])
def test_conlipa_errors_carry_line(tmp_path, body, err, line):
    with pytest.raises(err) as info:
        parse_conlipa(_conlipa(tmp_path, body))
    assert info.value.line == line


def test_conlipa_missing_header(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("kor\ta\tb\tc\td\n", encoding="utf-8")
    with pytest.raises(ParseError):
        parse_conlipa(path)


# -------------------------------------------------------------------- CoNLL

def _conll(tmp_path, text):
    path = tmp_path / "n.conll"
    path.write_text(text, encoding="utf-8")
    return path


def test_conll_minimal(tmp_path):
    assert load_conll(_conll(tmp_path, "John\tB-PER\n\n")) == [TaggedSentence(("John",), ("B-PER",))]


def test_conll_leading_inside_repaired(tmp_path):
    assert load_conll(_conll(tmp_path, "Paris\tI-LOC\n"))[0].tags == ("B-LOC",)


def test_conll_strict_rejects_orphan(tmp_path):
    with pytest.raises(UnknownTag):
        load_conll(_conll(tmp_path, "Paris\tI-LOC\n"), strict=True)


def test_conll_unknown_tag(tmp_path):
    with pytest.raises(UnknownTag) as info:
        load_conll(_conll(tmp_path, "a\tO\nb\tB-MISC\n"))
    assert info.value.line == 2


def test_conll_empty_file(tmp_path):
    with pytest.raises(EmptySentence):
        load_conll(_conll(tmp_path, "\n\n"))


def test_conll_round_trip(tmp_path):
    sents = [TaggedSentence(("a", "b"), ("B-ORG", "I-ORG")), TaggedSentence(("c",), ("O",))]
    path = tmp_path / "x.conll"
    write_conll(path, sents)
    assert load_conll(path) == sents


def test_tagged_sentence_invariants():
    with pytest.raises(LengthMismatch):
        TaggedSentence(("a",), ())
    with pytest.raises(EmptySentence):
        TaggedSentence((), ())


@given(st.lists(st.sampled_from(TAGS), min_size=1, max_size=30))
def test_repair_leaves_no_orphans(tags):
    fixed = repair_iob(tags)
    assert is_valid_iob(fixed)
    assert len(fixed) == len(tags)
    assert repair_iob(fixed) == fixed


def test_repair_thousand_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        tags = [TAGS[i] for i in rng.integers(0, 7, size=int(rng.integers(1, 31)))]
        fixed = repair_iob(tags)
        for i, t in enumerate(fixed):
            if t.startswith("I-"):
                assert i > 0 and fixed[i - 1][2:] == t[2:]


# ----------------------------------------------------------------- batching

def test_batch_sizes():
    assert [len(b) for b in make_pair_batches(range(10), 4, seed=0)] == [4, 4, 2]


def test_batches_deterministic_and_complete():
    recs = list(range(37))
    a = list(make_pair_batches(recs, 8, seed=3))
    assert a == list(make_pair_batches(recs, 8, seed=3))
    assert a != list(make_pair_batches(recs, 8, seed=4))
    flat = [i for b in a for i in b]
    assert Counter(flat) == Counter(range(37))


def test_grouped_batches_single_language():
    recs = table1_fixture(seed=0)[:400]
    batches = list(make_pair_batches(recs, 16, seed=0, group_by_language=True))
    assert all(len({recs[i].lang for i in b}) == 1 for b in batches)
    assert sorted(i for b in batches for i in b) == list(range(400))


def test_batch_size_must_be_positive():
    with pytest.raises(ValueError):
        list(make_pair_batches(range(3), 0, seed=0))


# ---------------------------------------------------------------- alignment

def test_align_first_token_rule():
    labels, mask = align_tags(TaggedSentence(("Paris",), ("B-LOC",)), [[7, 8, 9]], sentinels=False)
    assert labels == [TAG_TO_ID["B-LOC"], IGNORE_INDEX, IGNORE_INDEX]
    assert mask == [False, True, True]


def test_align_one_token_words_no_gaps():
    labels, _ = align_tags(TaggedSentence(("a", "b"), ("B-PER", "I-PER")), [[5], [6]], sentinels=False)
    assert labels == [1, 2]


def test_align_sentinels_ignored():
    labels, _ = align_tags(TaggedSentence(("a",), ("O",)), [[5]])
    assert labels == [IGNORE_INDEX, 0, IGNORE_INDEX]


def test_align_length_mismatch():
    with pytest.raises(LengthMismatch):
        align_tags(TaggedSentence(("a", "b"), ("O", "O")), [[5]])
    with pytest.raises(LengthMismatch):
        align_tags(TaggedSentence(("a",), ("O",)), [[]])


def test_align_non_ignored_equals_word_count():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        sent = TaggedSentence(tuple(f"w{i}" for i in range(n)),
                              tuple(repair_iob([TAGS[j] for j in rng.integers(0, 7, size=n)])))
        enc = [[4] * int(rng.integers(1, 5)) for _ in range(n)]
        labels, mask = align_tags(sent, enc)
        assert sum(not m for m in mask) == n
        assert len(labels) == sum(len(e) for e in enc) + 2


def test_language_set():
    assert len(LANGUAGES) == 10 and "kor" in LANGUAGES
