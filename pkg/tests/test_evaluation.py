import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipac.data import TAGS, CognatePairRecord, repair_iob
from ipac.errors import LengthMismatch
from ipac.evaluation import (
    aggregate_report,
    cosine_pairs,
    export_embeddings,
    extract_spans,
    format_table,
    mismatched_cosine,
    read_embeddings,
    span_f1,
    spans_to_tags,
    tag_f1,
    write_table_csv,
)
from oracles import brute_f1


def test_extract_examples():
    assert extract_spans(["B-PER", "I-PER", "O", "B-LOC"]) == {("PER", 0, 1), ("LOC", 3, 3)}
    assert extract_spans(["O", "O"]) == set()
    assert extract_spans(["B-PER", "B-PER"]) == {("PER", 0, 0), ("PER", 1, 1)}
    assert extract_spans(["B-PER", "I-ORG"]) == {("PER", 0, 0), ("ORG", 1, 1)}


def test_span_f1_matches_quadratic_matcher():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 31))
        gold = repair_iob([TAGS[i] for i in rng.integers(0, 7, size=n)])
        pred = repair_iob([TAGS[i] for i in rng.integers(0, 7, size=n)])
        s = tag_f1([gold], [pred])
        assert (s.precision, s.recall, s.f1) == brute_f1([gold], [pred])


def test_hand_case_half():
    s = span_f1([{("PER", 0, 1), ("LOC", 3, 3)}], [{("PER", 0, 0), ("LOC", 3, 3)}])
    assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)


def test_perfect_and_empty_predictions():
    gold = [{("PER", 0, 1)}]
    assert span_f1(gold, gold).f1 == 1.0
    assert span_f1(gold, [set()]).f1 == 0.0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        span_f1([set()], [])


@given(st.lists(st.lists(st.sampled_from(TAGS), min_size=1, max_size=12), min_size=1, max_size=5))
def test_spans_to_tags_inverse(corpus):
    for tags in corpus:
        fixed = repair_iob(tags)
        spans = extract_spans(fixed)
        assert extract_spans(spans_to_tags(spans, len(fixed))) == spans


@given(st.lists(st.tuples(st.lists(st.sampled_from(TAGS), min_size=3, max_size=3),
                          st.lists(st.sampled_from(TAGS), min_size=3, max_size=3)), min_size=2, max_size=6),
       st.randoms())
def test_span_f1_permutation_symmetric(pairs, rnd):
    gold = [repair_iob(g) for g, _ in pairs]
    pred = [repair_iob(p) for _, p in pairs]
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    assert tag_f1(gold, pred) == tag_f1([gold[i] for i in order], [pred[i] for i in order])


# ------------------------------------------------------------------ cosine

def test_identical_ipa_scores_100(tiny_model, vocab):
    report = cosine_pairs(tiny_model, [("p a ɹ i s", "p a ɹ i s")], vocab)
    assert f"{report.rows[0].percent:.2f}" == "100.00"


def test_injected_orthogonal_vectors_score_zero():
    def embed(ipas):
        return np.array([[1.0, 0.0] if s == "e" else [0.0, 1.0] for s in ipas])

    report = cosine_pairs(None, [("e", "t")], embed=embed)
    assert f"{report.rows[0].percent:.2f}" == "0.00"


def test_cosines_bounded(tiny_model, vocab, rng):
    syms = vocab.symbols
    pairs = [(" ".join(rng.choice(syms, 4)), " ".join(rng.choice(syms, 5))) for _ in range(50)]
    for r in cosine_pairs(tiny_model, pairs, vocab).rows:
        assert -1.0 - 1e-12 <= r.cosine <= 1.0 + 1e-12


def test_report_sorted_and_grouped(tiny_model, vocab):
    recs = [CognatePairRecord("kor", "가", "ga", "k a", "g a"),
            CognatePairRecord("hin", "दिल्ली", "delhi", "d ɪ l l i", "d ɛ l i")]
    report = cosine_pairs(tiny_model, recs, vocab)
    assert [r.pair_id for r in report.rows] == [0, 1]
    assert set(report.summary()) == {"hin", "kor"}


def test_mismatched_cosine_is_off_diagonal_mean():
    vecs = {"a": [1.0, 0.0], "b": [0.0, 1.0], "A": [1.0, 0.0], "B": [0.6, 0.8]}
    m = mismatched_cosine(None, [("a", "A"), ("b", "B")], embed=lambda xs: np.array([vecs[x] for x in xs]))
    assert m == pytest.approx((0.6 + 0.0) / 2)


def test_export_round_trip(tiny_model, vocab, tmp_path, rng):
    syms = vocab.symbols
    pairs = [CognatePairRecord("tur", f"g{i}", f"e{i}", " ".join(rng.choice(syms, 4)),
                               " ".join(rng.choice(syms, 3))) for i in range(6)]
    path = tmp_path / "emb.csv"
    export_embeddings(tiny_model, pairs, path, vocab)
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert len(rows[0]) == 4 + tiny_model.config.proj_dim
    assert len(rows) - 1 == 2 * len(pairs)
    vecs = read_embeddings(path)
    report = cosine_pairs(tiny_model, pairs, vocab)
    for r in report.rows:
        a, b = vecs[(r.pair_id, "e")], vecs[(r.pair_id, "t")]
        cos = float(a @ b) / math.sqrt(float(a @ a) * float(b @ b))
        assert abs(cos - r.cosine) < 1e-7


# --------------------------------------------------------------- aggregates

def test_aggregate_examples():
    assert aggregate_report({"a": 50, "b": 50}) == (50.0, 0.0)
    mean, std = aggregate_report({"a": 40, "b": 60})
    assert mean == 50.0 and std == pytest.approx(14.142, abs=1e-3)
    assert aggregate_report({"a": 40, "b": 60}, population=True)[1] == 10.0


def test_aggregate_single_language():
    assert aggregate_report({"a": 33.0}, population=True) == (33.0, 0.0)
    with pytest.raises(ValueError):
        aggregate_report({"a": 33.0})


def test_table_outputs(tmp_path):
    scores = {"swa": 40.0, "hin": 60.0}
    lines = format_table(scores).splitlines()
    assert lines[0].split() == ["swa", "hin", "AVG", "STD"]
    assert lines[1].split() == ["40.00", "60.00", "50.00", "14.14"]
    path = tmp_path / "t.csv"
    write_table_csv(path, scores)
    assert path.read_text().splitlines()[1] == "40.0000,60.0000,50.0000,14.1421"
