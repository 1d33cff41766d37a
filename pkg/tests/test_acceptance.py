"""Acceptance criteria, one check per criterion.

Each check prints a single ``PASS``/``FAIL`` line with the measured values,
the pinned tolerance and the runtime against its budget. A check passes only
if both the numeric condition and the runtime budget hold.

Run alone with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import io
import math
import sys
import time
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ipac.cli import TEMPERATURE_GRID, main
from ipac.config import SYNTHETIC
from ipac.contrastive import PairBatch, brute_force_info_nce, brute_force_ipac, info_nce, ipac_loss
from ipac.data import TAGS, SamplingPolicy, load_conlipa, repair_iob, write_conlipa
from ipac.encoder import (
    EncoderConfig,
    EncoderModel,
    count_params,
    embed_rows,
    forward_tokens,
    ner_logits,
    trainable_count,
)
from ipac.evaluation import cosine_pairs, mismatched_cosine, span_f1, tag_f1
from ipac.gradsuite import TOLERANCE, core_op_errors, ipac_embedding_error, ipac_param_errors
from ipac.lora import LoraConfig, attach_lora
from ipac.phoneme import Vocabulary
from ipac.synthetic import IPA_INVENTORY, make_cipher_corpus, make_ner_corpus, table1_fixture
from ipac.trainer import TrainConfig, prepare_ner_examples, train_ipac, train_ner
from oracles import brute_f1

# pinned tolerances
LOSS_TOL = 1e-12
GRAD_TOL = TOLERANCE  # 1e-5
COSINE_MARGIN = 0.1
TABLE1 = {"swa": 27, "ind": 86, "hin": 128, "cmn": 6, "ara": 34,
          "vie": 10, "tha": 31, "tam": 71, "tur": 52, "kor": 7521}


def cli(*argv) -> tuple[int, str]:
    """Run the command line in-process, returning exit code and stdout."""
    out = io.StringIO()
    with redirect_stdout(out), redirect_stderr(io.StringIO()):
        code = main([str(a) for a in argv])
    return code, out.getvalue()


def report(number: int, title: str, budget_s: float, fn) -> bool:
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    in_budget = elapsed < budget_s
    status = "PASS" if ok and in_budget else "FAIL"
    line = f"[{status}] criterion {number}: {title} | {detail} | {elapsed:.1f}s of {budget_s:g}s budget"
    if not in_budget:
        line += " (over budget)"
    print(line, flush=True)
    return ok and in_budget


@pytest.fixture
def show(capsys):
    def run(*args):
        with capsys.disabled():
            print()
            return report(*args)
    return run


# ---------------------------------------------------------------- criteria

def check_parameter_accounting():
    base = EncoderConfig.bert_base()
    lora = LoraConfig(r=8, alpha=32, targets=frozenset({"q", "k", "v", "o", "ff_up", "ff_down"}))
    n_lora = count_params(base, {"lora"}, lora)
    n_proj = count_params(base, {"projection"})
    n_train = trainable_count(base, lora)
    ok = (n_lora == 1_327_104 and n_proj == 49_216 and n_train == 1_376_320
          and n_train == 88_936_007 - 87_559_687 and n_lora + n_proj == n_train)
    return ok, f"lora={n_lora:,} projection={n_proj:,} trainable={n_train:,} (exact)"


def check_loss_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        tau = float(rng.choice([0.05, 0.1, 1.0]))
        ze = rng.normal(size=(n, 6))
        zt = rng.normal(size=(n, 6))
        b = PairBatch(ze / np.linalg.norm(ze, axis=1, keepdims=True),
                      zt / np.linalg.norm(zt, axis=1, keepdims=True), tau)
        worst = max(worst,
                    abs(info_nce(b, "e2t").item() - brute_force_info_nce(b, "e2t")),
                    abs(info_nce(b, "t2e").item() - brute_force_info_nce(b, "t2e")),
                    abs(ipac_loss(b).item() - brute_force_ipac(b)))
    single = PairBatch(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), 0.1)
    ident = PairBatch(np.eye(2), np.eye(2), 1.0)
    anchor = abs(info_nce(ident).item() - math.log(1 + math.exp(-1)))
    ok = worst < LOSS_TOL and info_nce(single).item() == 0.0 and anchor < LOSS_TOL
    return ok, f"max |loss - oracle| = {worst:.2e} (tol {LOSS_TOL:g}); N=1 -> 0; identity anchor err {anchor:.1e}"


def check_gradients():
    core = core_op_errors(points=10)
    e2e = ipac_param_errors(seed=0, coords_per_param=24)
    emb = max(ipac_embedding_error(s) for s in range(3))
    worst_core = max(core.values())
    worst_e2e = max(e2e.values())
    ok = worst_core < GRAD_TOL and worst_e2e < GRAD_TOL and emb < GRAD_TOL
    return ok, (f"{len(core)} core ops max rel err {worst_core:.2e}; end-to-end over {len(e2e)} "
                f"parameter tensors {worst_e2e:.2e}; embedding grad {emb:.2e} (tol {GRAD_TOL:g})")


def check_lora_identity_and_freeze():
    train, _ = make_cipher_corpus(64, 8, seed=0)
    vocab = Vocabulary(IPA_INVENTORY)
    model = EncoderModel.build(SYNTHETIC.encoder, seed=0)
    ids = [2, 7, 9, 12, 30, 3]
    before = (forward_tokens(model, ids).data, embed_rows(model, [ids]).data, ner_logits(model, ids).data)
    attach_lora(model, LoraConfig(r=8, alpha=32), seed=1)
    after = (forward_tokens(model, ids).data, embed_rows(model, [ids]).data, ner_logits(model, ids).data)
    identical = all(np.array_equal(a, b) for a, b in zip(before, after))
    hashes = {c: model.state_hash(c) for c in ("base", "ner_head", "lora", "projection")}
    train_ipac(model, train, vocab, replace(SYNTHETIC.train, batch_size=8), max_steps=10)
    kept = all(model.state_hash(c) == hashes[c] for c in ("base", "ner_head"))
    moved = all(model.state_hash(c) != hashes[c] for c in ("lora", "projection"))
    ok = identical and kept and moved
    return ok, f"fresh adapters bitwise identical={identical}; after 10 steps base/head unchanged={kept}, adapters/projection changed={moved}"


def check_synthetic_trend():
    seed = 0
    vocab = Vocabulary(IPA_INVENTORY)
    model = EncoderModel.build(SYNTHETIC.encoder, seed=seed)
    # phase 1 on the synthetic NER corpus
    examples = prepare_ner_examples(make_ner_corpus(200, seed=seed), vocab)
    train_ner(model, examples, TrainConfig(lr=1e-3, batch_size=16, warmup_ratio=0.1, seed=seed), epochs=1)
    attach_lora(model, SYNTHETIC.lora, seed=seed + 1)
    train, held = make_cipher_corpus(n_train=200, n_heldout=40, n_symbols=40, seed=seed)
    step0 = cosine_pairs(model, held, vocab).mean()
    cfg = replace(SYNTHETIC.train, temperature=0.1, ipac_epochs=2, batch_size=16, seed=seed)
    train_ipac(model, train, vocab, cfg)
    pos = cosine_pairs(model, held, vocab).mean()
    neg = mismatched_cosine(model, held, vocab)
    ok = pos > step0 and pos - neg >= COSINE_MARGIN
    return ok, (f"held-out positive cosine {step0:.4f} -> {pos:.4f}; mismatched {neg:.4f}; "
                f"margin {pos - neg:.4f} (need >= {COSINE_MARGIN})")


def check_span_f1():
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 31))
        gold = repair_iob([TAGS[i] for i in rng.integers(0, 7, size=n)])
        pred = repair_iob([TAGS[i] for i in rng.integers(0, 7, size=n)])
        s = tag_f1([gold], [pred])
        if (s.precision, s.recall, s.f1) != brute_f1([gold], [pred]):
            mismatches += 1
    hand = span_f1([{("PER", 0, 1), ("LOC", 3, 3)}], [{("PER", 0, 0), ("LOC", 3, 3)}])
    ok = mismatches == 0 and (hand.precision, hand.recall, hand.f1) == (0.5, 0.5, 0.5)
    return ok, f"{mismatches} disagreements with quadratic matcher over 1000 pairs (exact); hand case F1={hand.f1}"


def check_determinism(tmp: Path):
    ner = ["pretrain-ner", "--synthetic", "--seed", "7", "--lr", "1e-3", "--batch-size", "4",
           "--max-steps", "50", "--save-every", "25"]
    ipac = ["train-ipac", "--synthetic", "--seed", "7", "--epochs", "4", "--max-steps", "50", "--save-every", "25"]
    runs = [(ner, "ner1", None), (ner, "ner2", None), (ipac, "ipac1", None), (ipac, "ipac2", None),
            (ner, "ner3", "ner1/ner-step25.state"), (ipac, "ipac3", "ipac1/ipac-step25.state")]
    codes = [cli(*argv, "--out", tmp / out, *(("--resume", tmp / res) if res else ()))[0]
             for argv, out, res in runs]

    def same(a, b, name):
        return (tmp / a / name).read_bytes() == (tmp / b / name).read_bytes()

    n_lines = len((tmp / "ner1" / "ner-loss.tsv").read_text().splitlines())
    i_lines = len((tmp / "ipac1" / "ipac-loss.tsv").read_text().splitlines())
    reruns = same("ner1", "ner2", "ner-loss.tsv") and same("ipac1", "ipac2", "ipac-loss.tsv")
    resumed = (same("ner1", "ner3", "ner-loss.tsv") and same("ipac1", "ipac3", "ipac-loss.tsv")
               and same("ner1", "ner3", "model.ipac") and same("ipac1", "ipac3", "model.ipac"))
    ok = codes == [0] * 6 and n_lines == i_lines == 50 and reruns and resumed
    return ok, (f"exit codes {codes}; {n_lines}/{i_lines} logged steps; reruns bit-identical={reruns}; "
                f"resume at step 25 bit-identical={resumed}")


def check_data_layer(tmp: Path):
    path = tmp / "table1.tsv"
    write_conlipa(path, table1_fixture(seed=0))
    full, counts = load_conlipa(path, SamplingPolicy.uncapped())
    capped, capped_counts = load_conlipa(path)
    ok = counts == TABLE1 and len(full) == 7966 and len(capped) == 957 and capped_counts["kor"] == 512
    shown = ",".join(str(counts[k]) for k in TABLE1)
    return ok, f"counts {{{shown}}} total {len(full)}; default Korean cap -> {len(capped)} (exact)"


def check_temperature_grid(tmp: Path):
    rejected = [cli("ablate-temperature", "--synthetic", "--grid", bad)[0] for bad in ("0", "-0.1")]
    grid = ",".join(f"{t:g}" for t in TEMPERATURE_GRID)
    code, text = cli("ablate-temperature", "--synthetic", "--grid", grid, "--out", tmp / "temps.csv")
    out = text.splitlines()
    levels = [line.split()[0] for line in out[1:]]
    expected = ["0.01", "0.05", "0.1", "0.15", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1"]
    ok = code == 0 and rejected == [2, 2] and levels == expected and len(out) == 14
    return ok, f"{len(levels)} rows for levels {','.join(levels)}; tau<=0 exit codes {rejected}"


# ------------------------------------------------------------------- tests

def test_criterion_1_parameter_accounting(show):
    assert show(1, "parameter accounting", 1, check_parameter_accounting)


def test_criterion_2_loss_oracle(show):
    assert show(2, "loss oracle equivalence", 5, check_loss_oracle)


def test_criterion_3_gradients(show):
    assert show(3, "gradient verification", 60, check_gradients)


def test_criterion_4_lora_identity_and_freeze(show):
    assert show(4, "adapter identity and freeze", 30, check_lora_identity_and_freeze)


def test_criterion_5_synthetic_trend(show):
    assert show(5, "synthetic cognate cosine trend", 180, check_synthetic_trend)


def test_criterion_6_span_f1(show):
    assert show(6, "span F1 oracle", 10, check_span_f1)


def test_criterion_7_determinism(show, tmp_path, monkeypatch):
    monkeypatch.setenv("IPAC_THREADS", "1")
    assert show(7, "determinism and resume", 120, lambda: check_determinism(tmp_path))


def test_criterion_8_data_layer(show, tmp_path):
    assert show(8, "data-layer conformance", 30, lambda: check_data_layer(tmp_path))


def test_criterion_9_temperature_grid(show, tmp_path):
    assert show(9, "temperature grid", 300, lambda: check_temperature_grid(tmp_path))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
