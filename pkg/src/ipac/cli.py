"""Command line: ``ipac <command> [flags]``.

Exit status is 0 on success, 1 for usage errors, 2 for data or validation
errors and 3 for numerical failures. Diagnostics go to stderr; tables and
counts go to stdout or to the ``--out`` file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import load_checkpoint, save_checkpoint
from .config import SYNTHETIC, RunConfig, load_config
from .data import (
    LANGUAGES,
    CognatePairRecord,
    SamplingPolicy,
    apply_caps,
    language_counts,
    load_conll,
    parse_conlipa,
)
from .encoder import EncoderModel, count_params, trainable_count
from .errors import CapExceedsAvailable, DataError, IpacError, NonPositiveTemperature, NumericalError, UsageError
from .evaluation import (
    cosine_pairs,
    export_embeddings,
    format_table,
    mismatched_cosine,
    tag_f1,
    write_table_csv,
)
from .gradsuite import TOLERANCE, core_op_errors, ipac_param_errors
from .lora import attach_lora, parse_targets
from .phoneme import G2PTable, Vocabulary, build_vocab, tokenize
from .synthetic import IPA_INVENTORY, make_cipher_corpus, make_ner_corpus
from .trainer import (
    load_resume_state,
    predict_tags,
    prepare_ner_examples,
    train_ipac,
    train_ner,
    word_segments,
    write_manifest,
)

log = logging.getLogger("ipac")

TEMPERATURE_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
KOREAN_CAP_GRID = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 7521)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -------------------------------------------------------------- flag groups

def _flag_config(p):
    p.add_argument("--config", metavar="PATH", help="key=value run configuration file")


def _flag_seed(p):
    p.add_argument("--seed", type=int, metavar="N", help="seed for every random choice (overrides the config)")


def _flag_out(p, required=False, what="output path"):
    p.add_argument("--out", metavar="PATH", required=required, help=what)


def _flag_checkpoint(p, required=False, what="model checkpoint (.ipac)"):
    p.add_argument("--checkpoint", metavar="PATH", required=required, help=what)


def _flag_vocab(p):
    p.add_argument("--vocab", metavar="PATH", help="vocabulary file; built from the data when omitted")


def _flag_synthetic(p):
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in seeded synthetic corpus instead of --data")


def _flag_lang(p, what="comma-separated language codes to keep"):
    p.add_argument("--lang", metavar="CODE[,CODE...]", help=what)


def _flags_training(p, phase):
    p.add_argument("--epochs", type=int, metavar="N", help=f"{phase} epochs (overrides the config)")
    p.add_argument("--max-steps", type=int, metavar="N", help="stop after this many optimizer steps")
    p.add_argument("--save-every", type=int, default=0, metavar="N",
                   help="write a resumable state file every N steps (0 = only at the end)")
    p.add_argument("--resume", metavar="PATH", help="continue from a .state file written by a previous run")
    p.add_argument("--lr", type=float, metavar="F", help="peak learning rate (overrides the config)")
    p.add_argument("--batch-size", type=int, metavar="N", help="batch size (overrides the config)")


def _flags_contrastive(p):
    p.add_argument("--data", metavar="PATH", help="CONLIPA pair file")
    _flag_synthetic(p)
    _flag_checkpoint(p, what="phase-1 checkpoint to start from; a fresh encoder is built when omitted")
    _flag_vocab(p)
    p.add_argument("--temperature", type=float, metavar="F", help="contrastive temperature (overrides the config)")
    p.add_argument("--korean-cap", type=int, metavar="N", help="maximum number of Korean pairs (overrides the config)")
    _flag_lang(p)
    p.add_argument("--lora", metavar="r=N[,alpha=F,dropout=F]", help="adapter settings (overrides the config)")
    p.add_argument("--targets", metavar="all|q,k,v,o,ff_up,ff_down", help="linear maps that receive adapters")
    p.add_argument("--eval-pairs", metavar="PATH", help="CONLIPA file of held-out pairs for cosine scoring")
    p.add_argument("--eval-ner", metavar="PATH", action="append",
                   help="CoNLL file scored with span F1 after training (repeatable)")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ipac", description="Cross-lingual IPA contrastive learning toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build-vocab", help="collect the phoneme inventory of corpus files")
    p.add_argument("--data", metavar="PATH", action="append", required=True,
                   help="CONLIPA or CoNLL file (repeatable)")
    p.add_argument("--g2p", metavar="PATH", help="G2P table used to convert CoNLL words")
    _flag_lang(p, "G2P language code for CoNLL words")
    _flag_out(p, True, "vocabulary file to write")

    p = sub.add_parser("pretrain-ner", help="phase 1: supervised NER training")
    p.add_argument("--data", metavar="PATH", help="CoNLL training file")
    _flag_synthetic(p)
    _flag_vocab(p)
    p.add_argument("--g2p", metavar="PATH", help="G2P table for the corpus words (words are IPA when omitted)")
    _flag_lang(p, "G2P language code for the corpus words")
    p.add_argument("--strict-iob", action="store_true", help="reject orphan I- tags instead of repairing them")
    _flag_checkpoint(p, what="checkpoint to initialize from")
    _flag_config(p)
    _flag_seed(p)
    _flags_training(p, "NER")
    _flag_out(p, True, "directory for checkpoints, loss log and manifest")

    p = sub.add_parser("train-ipac", help="phase 2: contrastive fine-tuning of adapters and projection")
    _flags_contrastive(p)
    _flag_config(p)
    _flag_seed(p)
    _flags_training(p, "contrastive")
    _flag_out(p, True, "directory for checkpoints, loss log and manifest")

    p = sub.add_parser("eval-ner", help="span F1 of a checkpoint on CoNLL files")
    _flag_checkpoint(p, True)
    p.add_argument("--data", metavar="PATH", action="append", help="CoNLL test file (repeatable)")
    _flag_synthetic(p)
    _flag_lang(p, "one label per --data file, also the G2P language when --g2p is set")
    p.add_argument("--g2p", metavar="PATH", help="G2P table for the corpus words")
    p.add_argument("--strict-iob", action="store_true", help="reject orphan I- tags instead of repairing them")
    p.add_argument("--population-std", action="store_true", help="population instead of sample standard deviation")
    _flag_seed(p)
    _flag_out(p, what="CSV table of per-language F1 with AVG and STD")

    p = sub.add_parser("eval-cossim", help="cosine similarity of English / target pairs")
    _flag_checkpoint(p, True)
    p.add_argument("--data", metavar="PATH", help="CONLIPA pair file")
    _flag_synthetic(p)
    _flag_lang(p)
    _flag_seed(p)
    _flag_out(p, what="CSV report, one row per pair")

    p = sub.add_parser("export-embeddings", help="write pair embeddings as CSV")
    _flag_checkpoint(p, True)
    p.add_argument("--data", metavar="PATH", help="CONLIPA pair file")
    _flag_synthetic(p)
    _flag_lang(p)
    _flag_seed(p)
    _flag_out(p, True, "CSV file to write")

    p = sub.add_parser("param-count", help="parameter counts per component")
    _flag_config(p)
    p.add_argument("--lora", metavar="r=N[,alpha=F,dropout=F]", help="adapter settings (overrides the config)")
    p.add_argument("--targets", metavar="all|q,k,v,o,ff_up,ff_down", help="linear maps that receive adapters")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--suite", choices=("core", "ipac", "all"), default="all",
                   help="core ops, the end-to-end contrastive loss, or both")
    _flag_seed(p)

    p = sub.add_parser("ablate-temperature", help="one contrastive run per temperature")
    p.add_argument("--grid", metavar="F[,F...]", help="temperatures (default: 0.01 to 1.0, 13 levels)")
    _flags_contrastive(p)
    _flag_config(p)
    _flag_seed(p)
    _flags_ablation(p)

    p = sub.add_parser("ablate-korean-cap", help="one contrastive run per Korean sample cap")
    p.add_argument("--grid", metavar="N[,N...]", help="Korean caps (default: 16 doubling to 4096, then 7521)")
    _flags_contrastive(p)
    _flag_config(p)
    _flag_seed(p)
    _flags_ablation(p)

    p = sub.add_parser("ablate-language", help="one contrastive run per single training language")
    _flags_contrastive(p)
    _flag_config(p)
    _flag_seed(p)
    _flags_ablation(p)
    return parser


def _flags_ablation(p):
    p.add_argument("--epochs", type=int, metavar="N", help="contrastive epochs per run (overrides the config)")
    p.add_argument("--lr", type=float, metavar="F", help="peak learning rate (overrides the config)")
    p.add_argument("--batch-size", type=int, metavar="N", help="batch size (overrides the config)")
    _flag_out(p, what="CSV copy of the result table")


# ---------------------------------------------------------------- helpers

def _run_config(args) -> RunConfig:
    base = SYNTHETIC if getattr(args, "synthetic", False) else RunConfig()
    cfg = load_config(getattr(args, "config", None), base)
    train = cfg.train
    overrides = {"seed": getattr(args, "seed", None), "lr": getattr(args, "lr", None),
                 "batch_size": getattr(args, "batch_size", None),
                 "temperature": getattr(args, "temperature", None),
                 "korean_cap": getattr(args, "korean_cap", None)}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        train = replace(train, **overrides)
    lora = cfg.lora
    if getattr(args, "lora", None):
        lora = replace(lora, **_parse_lora(args.lora))
    if getattr(args, "targets", None):
        lora = replace(lora, targets=parse_targets(args.targets))
    return RunConfig(cfg.encoder, lora, train)


def _parse_lora(text: str) -> dict:
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("r", "alpha", "dropout"):
            raise UsageError(f"--lora expects r=N[,alpha=F,dropout=F], got {text!r}")
        try:
            out[key] = int(value) if key == "r" else float(value)
        except ValueError:
            raise UsageError(f"--lora: bad value for {key}: {value!r}") from None
    return out


def _langs(args) -> list[str] | None:
    if not getattr(args, "lang", None):
        return None
    codes = [c.strip() for c in args.lang.split(",") if c.strip()]
    return codes


def _check_codes(codes: Sequence[str]) -> None:
    bad = [c for c in codes if c not in LANGUAGES]
    if bad:
        raise UsageError(f"unknown language code(s): {','.join(bad)}")


def _need_data(args) -> None:
    if not args.synthetic and not args.data:
        raise UsageError(f"{args.command}: pass --data PATH or --synthetic")
    if args.synthetic and args.data:
        raise UsageError(f"{args.command}: --data and --synthetic are mutually exclusive")


@dataclass
class _Pairs:
    records: list[CognatePairRecord]
    heldout: list[CognatePairRecord] | None
    vocab: Vocabulary | None


def _load_pairs(args, seed: int, synthetic_langs: Sequence[str] = ("kor",)) -> _Pairs:
    """Uncapped pairs from ``--data`` or the synthetic corpus, filtered by ``--lang``."""
    _need_data(args)
    langs = _langs(args)
    if langs:
        _check_codes(langs)
    if args.synthetic:
        train, held = make_cipher_corpus(200, 40, langs=tuple(langs or synthetic_langs), seed=seed)
        return _Pairs(train, held, Vocabulary(IPA_INVENTORY))
    records = parse_conlipa(args.data)
    if langs:
        records = [r for r in records if r.lang in langs]
    held = parse_conlipa(args.eval_pairs) if getattr(args, "eval_pairs", None) else None
    return _Pairs(records, held, None)


def _pair_vocab(records: Sequence[CognatePairRecord]) -> Vocabulary:
    return build_vocab([tokenize(r.i_e) + tokenize(r.i_t) for r in records])


def _start_model(args, cfg: RunConfig, pairs: _Pairs) -> tuple[EncoderModel, Vocabulary]:
    """Phase-1 checkpoint or a fresh encoder, with adapters attached."""
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        if ck.vocab is None:
            raise DataError(f"{args.checkpoint} carries no vocabulary")
        model, vocab = ck.model, ck.vocab
    else:
        if args.vocab:
            vocab = Vocabulary.load(args.vocab)
        else:
            vocab = pairs.vocab or _pair_vocab(pairs.records + (pairs.heldout or []))
        model = EncoderModel.build(replace(cfg.encoder, vocab_size=len(vocab)), seed=cfg.train.seed)
    if model.lora is None:
        attach_lora(model, cfg.lora, seed=cfg.train.seed + 1)
    return model, vocab


def _cap(records, cap: int | None, seed: int, check: bool = False):
    if cap is None:
        return list(records)
    if check:
        available = language_counts(records)["kor"]
        if cap > available:
            raise CapExceedsAvailable(f"Korean cap {cap} exceeds the {available} Korean pairs available")
    return apply_caps(records, SamplingPolicy({"kor": cap}, seed=seed))


def _ner_sets(paths, vocab, cfg, g2p=None, langs=None, strict=False):
    out = []
    for k, path in enumerate(paths or []):
        lang = langs[k] if langs and k < len(langs) else None
        sents = load_conll(path, strict=strict)
        label = lang or Path(path).stem
        out.append((label, sents, prepare_ner_examples(sents, vocab, cfg.train.max_seq, g2p, lang)))
    return out


def _f1(model, sents, examples) -> float:
    gold = [list(s.tags) for s in sents]
    return tag_f1(gold, predict_tags(model, examples)).f1


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _emit(rows: list[list[str]], out: str | None) -> None:
    width = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    for r in rows:
        cells = [r[0].ljust(width[0])] + [c.rjust(w) for c, w in zip(r[1:], width[1:])]
        print("  ".join(cells).rstrip())
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


def _corpus_vocab(sents, g2p=None, lang=None) -> Vocabulary:
    return build_vocab([word_segments(w, g2p, lang) for s in sents for w in s.words])


# ---------------------------------------------------------------- commands

def cmd_build_vocab(args) -> int:
    g2p = G2PTable.load(args.g2p) if args.g2p else None
    langs = _langs(args)
    corpus = []
    for path in args.data:
        with open(path, encoding="utf-8") as fh:
            first = next((ln for ln in fh if ln.strip() and not ln.startswith("#")), "")
        if first.startswith("lang\t"):
            corpus += [tokenize(r.i_e) + tokenize(r.i_t) for r in parse_conlipa(path)]
        else:
            lang = langs[0] if langs else None
            corpus += [word_segments(w, g2p, lang) for s in load_conll(path) for w in s.words]
    vocab = build_vocab(corpus)
    vocab.save(args.out)
    print(f"{len(vocab.symbols)} symbols, {len(vocab)} ids -> {args.out}")
    return 0


def cmd_pretrain_ner(args) -> int:
    _need_data(args)
    cfg = _run_config(args)
    langs = _langs(args)
    lang = langs[0] if langs else None
    g2p = G2PTable.load(args.g2p) if args.g2p else None
    if args.synthetic:
        sents = make_ner_corpus(200, seed=cfg.train.seed)
    else:
        sents = load_conll(args.data, strict=args.strict_iob)
    out = Path(args.out)
    resume = None
    if args.resume:
        model, vocab, opt, state, tcfg = load_resume_state(args.resume)
        cfg = RunConfig(model.config, cfg.lora, tcfg)
        resume = (opt, state)
    elif args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        model, vocab = ck.model, ck.vocab
    else:
        if args.vocab:
            vocab = Vocabulary.load(args.vocab)
        elif args.synthetic:
            vocab = Vocabulary(IPA_INVENTORY)
        else:
            vocab = _corpus_vocab(sents, g2p, lang)
        model = EncoderModel.build(replace(cfg.encoder, vocab_size=len(vocab)), seed=cfg.train.seed)
    examples = prepare_ner_examples(sents, vocab, cfg.train.max_seq, g2p, lang)
    res = train_ner(model, examples, cfg.train, vocab, out, epochs=args.epochs, max_steps=args.max_steps,
                    save_every=args.save_every, resume=resume)
    save_checkpoint(out / "model.ipac", res.model, vocab)
    write_manifest(out, _manifest_config(cfg, args), cfg.train.seed, [] if args.synthetic else [args.data])
    _report_training(res)
    return 0


def cmd_train_ipac(args) -> int:
    cfg = _run_config(args)
    pairs = _load_pairs(args, cfg.train.seed)
    resume = None
    if args.resume:
        model, vocab, opt, state, tcfg = load_resume_state(args.resume)
        cfg = RunConfig(model.config, model.lora or cfg.lora, tcfg)
        resume = (opt, state)
    else:
        model, vocab = _start_model(args, cfg, pairs)
    records = _cap(pairs.records, cfg.train.korean_cap, cfg.train.seed)
    out = Path(args.out)
    res = train_ipac(model, records, vocab, cfg.train, out, epochs=args.epochs, max_steps=args.max_steps,
                     save_every=args.save_every, resume=resume)
    save_checkpoint(out / "model.ipac", res.model, vocab)
    data_files = [p for p in (args.data, args.eval_pairs) if p]
    write_manifest(out, _manifest_config(cfg, args), cfg.train.seed, data_files)
    print(f"pairs\t{len(records)}")
    _report_training(res)
    if pairs.heldout and len(pairs.heldout) > 1:
        print(f"heldout_cosine\t{_fmt(cosine_pairs(model, pairs.heldout, vocab).mean())}")
        print(f"mismatched_cosine\t{_fmt(mismatched_cosine(model, pairs.heldout, vocab))}")
    for label, sents, examples in _ner_sets(args.eval_ner, vocab, cfg):
        print(f"ner_f1[{label}]\t{_fmt(_f1(model, sents, examples))}")
    return 0


def _manifest_config(cfg: RunConfig, args) -> dict:
    d = cfg.to_dict()
    d["command"] = args.command
    d["lora"]["targets"] = sorted(d["lora"]["targets"])
    return d


def _report_training(res) -> None:
    print(f"steps\t{res.state.step}")
    if res.state.losses:
        print(f"final_loss\t{res.state.losses[-1]!r}")


def cmd_eval_ner(args) -> int:
    if not args.synthetic and not args.data:
        raise UsageError("eval-ner: pass --data PATH or --synthetic")
    ck = load_checkpoint(args.checkpoint)
    if ck.vocab is None:
        raise DataError(f"{args.checkpoint} carries no vocabulary")
    langs = _langs(args)
    g2p = G2PTable.load(args.g2p) if args.g2p else None
    cfg = RunConfig(ck.model.config)
    if args.synthetic:
        seed = 0 if args.seed is None else args.seed
        sents = make_ner_corpus(100, seed=seed + 1)
        sets = [("synthetic", sents, prepare_ner_examples(sents, ck.vocab, cfg.train.max_seq))]
    else:
        if langs and len(langs) != len(args.data):
            raise UsageError("eval-ner: --lang needs one code per --data file")
        sets = _ner_sets(args.data, ck.vocab, cfg, g2p, langs, args.strict_iob)
    rows = [["lang", "precision", "recall", "f1"]]
    scores = {}
    for label, sents, examples in sets:
        s = tag_f1([list(x.tags) for x in sents], predict_tags(ck.model, examples))
        scores[label] = 100.0 * s.f1
        rows.append([label, _fmt(s.precision), _fmt(s.recall), _fmt(s.f1)])
    _emit(rows, None)
    if len(scores) > 1 or args.population_std:
        sys.stdout.write(format_table(scores, population=args.population_std))
    if args.out:
        write_table_csv(args.out, scores, population=args.population_std)
    return 0


def _checkpoint_and_pairs(args):
    ck = load_checkpoint(args.checkpoint)
    if ck.vocab is None:
        raise DataError(f"{args.checkpoint} carries no vocabulary")
    seed = 0 if args.seed is None else args.seed
    pairs = _load_pairs(args, seed)
    items = pairs.heldout if args.synthetic else pairs.records
    return ck, items


def cmd_eval_cossim(args) -> int:
    ck, items = _checkpoint_and_pairs(args)
    report = cosine_pairs(ck.model, items, ck.vocab)
    rows = [["lang", "pairs", "mean_percent"]]
    for lang, mean in report.summary().items():
        rows.append([lang, str(sum(r.lang == lang for r in report.rows)), f"{100 * mean:.2f}"])
    rows.append(["all", str(len(report.rows)), f"{100 * report.mean():.2f}"])
    if len(items) > 1:
        rows.append(["mismatched", str(len(items) * (len(items) - 1)),
                     f"{100 * mismatched_cosine(ck.model, items, ck.vocab):.2f}"])
    _emit(rows, None)
    if args.out:
        report.write_csv(args.out)
    return 0


def cmd_export_embeddings(args) -> int:
    ck, items = _checkpoint_and_pairs(args)
    export_embeddings(ck.model, items, args.out, ck.vocab)
    print(f"{2 * len(items)} rows -> {args.out}")
    return 0


def cmd_param_count(args) -> int:
    cfg = _run_config(args)
    enc, lora = cfg.encoder, cfg.lora
    rows = [["component", "parameters"]]
    for comp in ("base", "lora", "projection", "ner_head"):
        rows.append([comp, f"{count_params(enc, {comp}, lora):,}"])
    rows.append(["trainable_phase2", f"{trainable_count(enc, lora):,}"])
    rows.append(["total", f"{count_params(enc, {'base', 'lora', 'projection', 'ner_head'}, lora):,}"])
    _emit(rows, None)
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    errors: dict[str, float] = {}
    if args.suite in ("core", "all"):
        errors.update(core_op_errors(points=10, seed=1000 + seed))
    if args.suite in ("ipac", "all"):
        errors.update({f"ipac:{k}": v for k, v in ipac_param_errors(seed).items()})
    rows = [["check", "max_rel_error", "status"]]
    for name, err in errors.items():
        rows.append([name, f"{err:.3e}", "ok" if err < TOLERANCE else "FAIL"])
    _emit(rows, None)
    worst = max(errors.values())
    print(f"worst\t{worst:.3e}")
    return 0 if worst < TOLERANCE else EXIT_NUMERIC


# --------------------------------------------------------------- ablations

def _parse_grid(text: str | None, default, cast):
    if not text:
        return list(default)
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--grid: cannot parse {text!r}") from None


def _ablate(args, runs):
    """Train once per ``(label, records, train_config)`` from one shared starting model."""
    cfg = _run_config(args)
    pairs = runs.pairs
    start, vocab = _start_model(args, cfg, pairs)
    eval_pairs = pairs.heldout or pairs.records
    ner = _ner_sets(args.eval_ner, vocab, cfg)
    head = [runs.column, "pairs", "final_loss", "pos_cos", "neg_cos", "margin"] + (["ner_f1"] if ner else [])
    rows = [head]
    for label, records, tcfg in runs.items:
        model = start.copy()
        res = train_ipac(model, records, vocab, tcfg, epochs=args.epochs)
        spe = res.state.total_steps // max(1, (args.epochs or tcfg.ipac_epochs))
        last = float(np.mean(res.state.losses[-spe:]))
        pos = cosine_pairs(model, eval_pairs, vocab).mean()
        neg = mismatched_cosine(model, eval_pairs, vocab)
        row = [label, str(len(records)), _fmt(last), _fmt(pos), _fmt(neg), _fmt(pos - neg)]
        if ner:
            row.append(_fmt(float(np.mean([_f1(model, s, e) for _, s, e in ner]))))
        rows.append(row)
        log.info("%s=%s done", runs.column, label)
    _emit(rows, args.out)
    return 0


@dataclass
class _Runs:
    column: str
    pairs: _Pairs
    items: list


def cmd_ablate_temperature(args) -> int:
    grid = _parse_grid(args.grid, TEMPERATURE_GRID, float)
    bad = [t for t in grid if not t > 0]
    if bad:
        raise NonPositiveTemperature(f"temperatures must be positive, got {bad}")
    cfg = _run_config(args)
    pairs = _load_pairs(args, cfg.train.seed)
    records = _cap(pairs.records, cfg.train.korean_cap, cfg.train.seed)
    items = [(f"{t:g}", records, replace(cfg.train, temperature=t)) for t in grid]
    return _ablate(args, _Runs("tau", pairs, items))


def cmd_ablate_korean_cap(args) -> int:
    grid = _parse_grid(args.grid, KOREAN_CAP_GRID, int)
    if any(c < 0 for c in grid):
        raise DataError("Korean caps must be non-negative")
    cfg = _run_config(args)
    pairs = _load_pairs(args, cfg.train.seed, synthetic_langs=LANGUAGES)
    items = [(str(c), _cap(pairs.records, c, cfg.train.seed, check=True), cfg.train) for c in grid]
    return _ablate(args, _Runs("korean_cap", pairs, items))


def cmd_ablate_language(args) -> int:
    cfg = _run_config(args)
    pairs = _load_pairs(args, cfg.train.seed, synthetic_langs=LANGUAGES)
    records = _cap(pairs.records, cfg.train.korean_cap, cfg.train.seed)
    present = [l for l in LANGUAGES if any(r.lang == l for r in records)]
    items = [(l, [r for r in records if r.lang == l], cfg.train) for l in present]
    return _ablate(args, _Runs("lang", pairs, items))


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "pretrain-ner": cmd_pretrain_ner,
    "train-ipac": cmd_train_ipac,
    "eval-ner": cmd_eval_ner,
    "eval-cossim": cmd_eval_cossim,
    "export-embeddings": cmd_export_embeddings,
    "param-count": cmd_param_count,
    "gradcheck": cmd_gradcheck,
    "ablate-temperature": cmd_ablate_temperature,
    "ablate-korean-cap": cmd_ablate_korean_cap,
    "ablate-language": cmd_ablate_language,
}


def _threads() -> int:
    raw = os.environ.get("IPAC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"IPAC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("IPAC_THREADS must be >= 1")
    return n


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        # overflow surfaces as NonFinite; numpy's own warning would only repeat it
        with threadpool_limits(limits=_threads()), np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IpacError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
