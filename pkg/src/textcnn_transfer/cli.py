"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments
from .corpus import DomainRole, compute_stats, oov_count, rank_sources
from .experiments import TransferPair, num_classes_of, train_from_scratch
from .model import ModelConfig, config_param_count, init_random
from .nn import Activation, ConfigError
from .plan import BASELINE, DEFAULT_SETTINGS, FINETUNE_THROUGH_H, TransferPlan
from .report import ReportTable, render_csv, render_text, simple_table
from .synth import SynthSpec, generate
from .text import DatasetFormatError, VectorFileError, build_vocab, encode_dataset, read_dataset, write_dataset
from .trainer import NonFiniteLossError, RunResult, TrainConfig, cross_validate, evaluate, train
from .transfer import (CheckpointError, TransferError, build_transfer_model, load_checkpoint,
                       model_from_checkpoint, save_checkpoint)

log = logging.getLogger("textcnn_transfer")

EXIT_USAGE = 2
EXIT_NUMERIC = 3

_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_EXTRA_KEYS = {"min_count": int}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in _MODEL_FIELDS and key not in _TRAIN_FIELDS and key not in _EXTRA_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(key: str, value: str, default):
    v = value.strip()
    if key == "region_sizes":
        return tuple(int(x) for x in v.replace("(", "").replace(")", "").split(",") if x.strip())
    if key in ("conv_activation", "hidden_activation"):
        return Activation.parse(v)
    if isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if v.lower() == "none":
        return None
    try:
        if isinstance(default, int) or key in ("seed", "min_count"):
            return int(v)
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


@dataclasses.dataclass
class Settings:
    model: ModelConfig
    train: TrainConfig
    min_count: int = 1
    model_overrides: dict = dataclasses.field(default_factory=dict)


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Merge defaults, the config file and command-line overrides (in that order)."""
    raw: dict[str, str] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        raw.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for item in getattr(args, "set", None) or []:
        raw.update(parse_config_text(item, "--set"))
    for flag, key in (("seed", "seed"), ("epochs", "epochs"), ("folds", "folds"),
                      ("repetitions", "repetitions"), ("batch_size", "batch_size")):
        if getattr(args, flag, None) is not None:
            raw[key] = str(getattr(args, flag))
    if getattr(args, "disjoint_folds", False):
        raw["disjoint_folds"] = "true"
    model_kw, train_kw, min_count = {}, {}, 1
    for key, value in raw.items():
        if key == "min_count":
            min_count = int(value)
        elif key in _MODEL_FIELDS:
            model_kw[key] = _coerce(key, value, _MODEL_FIELDS[key].default)
        else:
            train_kw[key] = _coerce(key, value, _TRAIN_FIELDS[key].default)
    # dropout_rate and l2_cap live on the model config; the train config keeps None
    model = ModelConfig(**model_kw)
    train_cfg = TrainConfig(**train_kw)
    overrides = {k: v for k, v in model_kw.items() if k != "num_classes"}
    return Settings(model, train_cfg, min_count, overrides)


def _dtype(args) -> type:
    return np.float64 if getattr(args, "precision", 32) == 64 else np.float32


def _load_dataset(path: str):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"dataset {p} not found")
    return read_dataset(p)


def _load_ckpt(path: str):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint {p} not found")
    return load_checkpoint(p)


def _name(path: str) -> str:
    return Path(path).stem


def _write_outputs(out: Path | None, stem: str, table: ReportTable, record: dict) -> None:
    text = render_text(table)
    sys.stdout.write(text)
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.txt").write_text(text, encoding="utf-8")
    (out / f"{stem}.csv").write_text(render_csv(table), encoding="utf-8")
    (out / f"{stem}.json").write_text(json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                                      encoding="utf-8")


def _table_record(kind: str, table: ReportTable, **extra) -> dict:
    return {"kind": kind, "title": table.title, "row_header": table.row_header, "rows": table.row_labels,
            "columns": table.col_labels, "cells": [[list(c) if isinstance(c, tuple) else c for c in row]
                                                   for row in table.cells], **extra}


def _parse_plans(text: str | None) -> list[TransferPlan]:
    if not text:
        return list(DEFAULT_SETTINGS)
    return [TransferPlan.parse(t) for t in text.split(",") if t.strip()]


# -------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    kw = dict(num_classes=args.classes, num_sentences=args.sentences,
              sentence_length=(args.min_length, args.max_length), class_keyword_pool=args.keyword_pool,
              shared_pool_size=args.shared_pool, keyword_rate=args.keyword_rate, bigrams=args.bigrams,
              seed=args.seed if args.seed is not None else 0)
    reference = None
    if args.ref_seed is not None:
        reference = SynthSpec(**{**kw, "seed": args.ref_seed, "num_classes": args.ref_classes or args.classes,
                                 "num_sentences": 1})
        kw["overlap_fraction"] = args.overlap
    elif args.overlap:
        raise UsageError("--overlap needs --ref-seed")
    write_dataset(generate(SynthSpec(**kw), reference), args.out)
    return 0


def cmd_stats(args) -> int:
    rows = []
    for path in args.datasets:
        st = compute_stats(_load_dataset(path), args.role, args.vectors)
        rows.append([_name(path), st.domain_role.value, st.num_classes, round(st.avg_length, 2),
                     st.num_sentences, st.vocab_size, st.pretrained_covered])
    table = simple_table("Dataset statistics", ["Dataset", "D", "C", "L", "N", "V", "V_pre"], rows)
    _write_outputs(_out(args), "stats", table, {"kind": "stats", "title": table.title, "header": ["Dataset", "D", "C", "L", "N", "V", "V_pre"],
                                               "rows": rows})
    return 0


def cmd_oov(args) -> int:
    targets = {_name(p): build_vocab(ex.tokens for ex in _load_dataset(p)) for p in args.targets}
    sources = {_name(p): build_vocab(ex.tokens for ex in _load_dataset(p)) for p in args.sources}
    rows = [[s] + [None if s == t else oov_count(tv, sv) for t, tv in targets.items()]
            for s, sv in sources.items()]
    table = simple_table("Target words not present in the source", ["Source"] + list(targets), rows)
    _write_outputs(_out(args), "oov", table, {"kind": "oov", "title": table.title, "header": ["Source"] + list(targets), "rows": rows})
    return 0


def cmd_advise(args) -> int:
    target = _load_dataset(args.target)
    t_stats = compute_stats(target, DomainRole.TARGET)
    t_vocab = build_vocab(ex.tokens for ex in target)
    cands = []
    for p in args.sources:
        data = _load_dataset(p)
        cands.append((_name(p), compute_stats(data, DomainRole.SOURCE), build_vocab(ex.tokens for ex in data)))
    weights = tuple(float(x) for x in args.weights.split(",")) if args.weights else None
    scores = rank_sources(t_stats, t_vocab, cands, **({"weights": weights} if weights else {}))
    header = ["Rank", "Source", "OOV", "V", "N", "Class match", "Score"]
    rows = [[s.rank, s.source_id, s.oov, s.vocab_size, s.num_sentences, s.class_match, round(s.score, 4)]
            for s in scores]
    table = simple_table(f"Source ranking for {_name(args.target)}", header, rows)
    _write_outputs(_out(args), "advise", table, {"kind": "advise", "title": table.title, "header": header, "rows": rows})
    return 0


def _holdout_split(n: int, fraction: float, seed: int) -> np.ndarray:
    held = np.zeros(n, dtype=bool)
    k = int(np.floor(fraction * n))
    if k:
        held[np.random.default_rng(np.random.SeedSequence([seed, 7])).choice(n, size=k, replace=False)] = True
    return held


def cmd_train(args) -> int:
    st = resolve_settings(args)
    examples = _load_dataset(args.dataset)
    source = _load_ckpt(args.from_checkpoint) if args.from_checkpoint else None
    dtype = _dtype(args)
    rng = np.random.default_rng(st.train.seed)
    vocab = build_vocab((ex.tokens for ex in examples), st.min_count)
    if source is not None:
        plan = TransferPlan.parse(args.plan) if args.plan else FINETUNE_THROUGH_H
        mcfg = experiments.target_config(source.config, examples, **st.model_overrides)
        model = build_transfer_model(source, vocab, mcfg, plan, rng, dtype=dtype)
    else:
        plan = BASELINE
        mcfg = st.model.replace(num_classes=num_classes_of(examples))
        emb = None
        if args.vectors:
            from .text import load_pretrained_vectors
            emb, _ = load_pretrained_vectors(args.vectors, vocab, rng, d=mcfg.d, dtype=dtype)
        model = init_random(mcfg, vocab, rng, dtype=dtype, embeddings=emb)
    data = encode_dataset(examples, vocab, mcfg.max_len, mcfg.min_len)
    held = _holdout_split(len(data), args.holdout, st.train.seed)
    train_set = [s for s, h in zip(data, held) if not h]
    test_set = [s for s, h in zip(data, held) if h]
    train(model, train_set, st.train, rng)
    acc = evaluate(model, test_set) if test_set else None
    result = RunResult(acc if acc is not None else float("nan"), [[acc]] if acc is not None else [],
                       [acc] if acc is not None else [], [st.train.seed], [[len(test_set)]])
    record = {"kind": "train", "dataset": _name(args.dataset), "plan": plan.label, "holdout_accuracy": acc,
              "model_config": mcfg.to_dict(), "train_config": dataclasses.asdict(st.train)}
    if args.cv:
        cv = cross_validate(data, st.train, plan if source is not None else None, source,
                            model_config=mcfg, vocab=vocab, dtype=dtype, jobs=args.jobs)
        record["cross_validation"] = cv.to_dict()
    else:
        record["result"] = result.to_dict()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    provenance = f"dataset={_name(args.dataset)};seed={st.train.seed};plan={plan.ascii}"
    save_checkpoint(model, vocab, out, provenance)
    out.with_suffix(out.suffix + ".json").write_text(json.dumps(record, indent=2, sort_keys=True,
                                                                ensure_ascii=False) + "\n", encoding="utf-8")
    if acc is not None:
        print(f"held-out accuracy: {acc:.4f} ({len(test_set)} examples)")
    if args.cv:
        print(f"cross-validated accuracy: {record['cross_validation']['mean_accuracy']:.4f}")
    print(f"checkpoint written to {out}")
    return 0


def cmd_transfer(args) -> int:
    st = resolve_settings(args)
    source = _load_ckpt(args.checkpoint)
    examples = _load_dataset(args.dataset)
    plan = TransferPlan.parse(args.plan)
    vocab = build_vocab((ex.tokens for ex in examples), st.min_count)
    mcfg = experiments.target_config(source.config, examples, **st.model_overrides)
    model = build_transfer_model(source, vocab, mcfg, plan, np.random.default_rng(st.train.seed),
                                 dtype=_dtype(args), train_uncovered=args.train_uncovered)
    save_checkpoint(model, vocab, args.out, f"transfer-init;source={source.provenance};plan={plan.ascii}")
    print(f"{plan.label}: {model.embeddings.num_covered} of {len(vocab)} embedding rows copied; "
          f"trainable C+H parameters {config_param_count(mcfg, plan)}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    model = model_from_checkpoint(ckpt, _dtype(args))
    examples = _load_dataset(args.dataset)
    data = encode_dataset(examples, ckpt.vocabulary, ckpt.config.max_len, ckpt.config.min_len)
    if max(s.label for s in data) >= ckpt.config.num_classes:
        raise UsageError(f"dataset has labels beyond the checkpoint's {ckpt.config.num_classes} classes")
    print(f"accuracy: {evaluate(model, data):.4f} ({len(data)} examples)")
    return 0


def _pairs(specs: Sequence[Sequence[str]]) -> list[TransferPair]:
    if not specs:
        raise UsageError("at least one --pair SOURCE_CHECKPOINT TARGET_DATASET is required")
    # load everything before any training starts
    return [TransferPair(_name(c), _load_ckpt(c), _name(t), _load_dataset(t)) for c, t in specs]


def cmd_matrix(args) -> int:
    st = resolve_settings(args)
    pairs = _pairs(args.pair)
    settings = _parse_plans(args.settings)
    res = experiments.run_matrix(pairs, settings, st.train, include_baseline=args.include_baseline,
                                 dtype=_dtype(args), jobs=args.jobs, min_count=st.min_count, **st.model_overrides)
    runs = {f"{s} | {p}": (r.to_dict() if r else None) for (s, p), r in res.runs.items()}
    configs = {k: v.to_dict() for k, v in res.configs.items()}
    record = _table_record("matrix", res.table, runs=runs, model_configs=configs,
                           train_config=dataclasses.asdict(st.train))
    _write_outputs(_out(args), "matrix", res.table, record)
    return 0


def cmd_sweep_dropout(args) -> int:
    st = resolve_settings(args)
    pairs = _pairs(args.pair)
    rates = [float(r) for r in args.rates.split(",")] if args.rates else list(experiments.DEFAULT_DROPOUT_RATES)
    if any(not 0 <= r < 1 for r in rates):
        raise UsageError("dropout rates must lie in [0, 1)")
    plan = TransferPlan.parse(args.plan) if args.plan else FINETUNE_THROUGH_H
    overrides = {k: v for k, v in st.model_overrides.items() if k != "dropout_rate"}
    table = experiments.run_dropout_sweep(pairs, rates, st.train, plan, dtype=_dtype(args), jobs=args.jobs,
                                          min_count=st.min_count, **overrides)
    _write_outputs(_out(args), "dropout", table, _table_record("sweep-dropout", table, plan=plan.label))
    return 0


def cmd_sweep_activation(args) -> int:
    st = resolve_settings(args)
    try:
        s_acts = [Activation.parse(a) for a in args.source_acts.split(",")]
        t_acts = [Activation.parse(a) for a in args.target_acts.split(",")]
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    source = _load_dataset(args.source)
    target = _load_dataset(args.target)
    table = experiments.run_activation_sweep(_name(args.source), source, _name(args.target), target, st.model,
                                             s_acts, t_acts, st.train, dtype=_dtype(args), jobs=args.jobs,
                                             min_count=st.min_count)
    _write_outputs(_out(args), "activation", table, _table_record("sweep-activation", table))
    return 0


def _table_from_record(rec: dict) -> ReportTable:
    kind = rec["kind"]
    if kind in ("stats", "oov", "advise"):
        return simple_table(rec.get("title", kind), rec["header"], rec["rows"])
    cells = [[tuple(c) if isinstance(c, list) else c for c in row] for row in rec["cells"]]
    table = ReportTable(rec["title"], rec["rows"], rec["columns"], cells, row_header=rec["row_header"])
    if kind == "matrix" and rec.get("model_configs"):
        # parameter counts follow the first column's architecture
        cfg = ModelConfig.from_dict(next(iter(rec["model_configs"].values())))
        table.col_labels.append("#Parameters")
        for label, row in zip(table.row_labels, table.cells):
            row.append(str(config_param_count(cfg, TransferPlan.parse(label))))
    return table


def cmd_report(args) -> int:
    root = Path(args.results)
    records = sorted(root.glob("*.json")) if root.is_dir() else []
    if not records:
        raise UsageError(f"no result records in {root}")
    out = Path(args.out) if args.out else root / "report"
    out.mkdir(parents=True, exist_ok=True)
    bad = []
    texts = []
    for path in records:
        try:
            rec = json.loads(path.read_text(encoding="utf-8"))
            table = _table_from_record(rec)
        except (ValueError, KeyError, TypeError) as exc:
            bad.append(f"{path.name}: {exc}")
            continue
        texts.append(render_text(table))
        (out / f"{path.stem}.csv").write_text(render_csv(table), encoding="utf-8")
    if bad:
        texts.append("unreadable records:\n" + "\n".join(f"  {b}" for b in bad) + "\n")
    text = "\n".join(texts)
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _out(args) -> Path | None:
    return Path(args.out) if getattr(args, "out", None) else None


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1, help="parallel cross-validation folds")
    common.add_argument("--precision", type=int, choices=(32, 64), default=32)
    common.add_argument("-v", "--verbose", action="store_true")

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--epochs", type=int)
    train_flags.add_argument("--batch-size", type=int)
    train_flags.add_argument("--folds", type=int)
    train_flags.add_argument("--repetitions", type=int)
    train_flags.add_argument("--disjoint-folds", action="store_true", help="classic partitioned k-fold")

    p = argparse.ArgumentParser(prog="textcnn-transfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--sentences", type=int, default=1000)
    s.add_argument("--min-length", type=int, default=8)
    s.add_argument("--max-length", type=int, default=16)
    s.add_argument("--keyword-pool", type=int, default=20)
    s.add_argument("--shared-pool", type=int, default=200)
    s.add_argument("--keyword-rate", type=float, default=0.2)
    s.add_argument("--bigrams", action="store_true")
    s.add_argument("--overlap", type=float, default=0.0, help="fraction of pools reused from the reference")
    s.add_argument("--ref-seed", type=int, help="seed of the reference (source) corpus spec")
    s.add_argument("--ref-classes", type=int)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("stats", parents=[common], help="dataset statistics")
    s.add_argument("datasets", nargs="+")
    s.add_argument("--role", choices=[r.value for r in DomainRole], default="target")
    s.add_argument("--vectors")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("oov", parents=[common], help="out-of-vocabulary counts")
    s.add_argument("--targets", nargs="+", required=True)
    s.add_argument("--sources", nargs="+", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_oov)

    s = sub.add_parser("advise", parents=[common], help="rank candidate source datasets")
    s.add_argument("target")
    s.add_argument("sources", nargs="+")
    s.add_argument("--weights", help="four comma-separated weights")
    s.add_argument("--out")
    s.set_defaults(func=cmd_advise)

    s = sub.add_parser("train", parents=[common, train_flags], help="train a model and save a checkpoint")
    s.add_argument("dataset")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--from-checkpoint")
    s.add_argument("--plan")
    s.add_argument("--vectors")
    s.add_argument("--holdout", type=float, default=0.1, help="held-out fraction (0 trains on everything)")
    s.add_argument("--cv", action="store_true", help="also run repeated cross-validation")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("transfer", parents=[common], help="save a transferred (untrained) target model")
    s.add_argument("checkpoint")
    s.add_argument("dataset")
    s.add_argument("--plan", required=True)
    s.add_argument("--train-uncovered", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("eval", parents=[common], help="accuracy of a checkpoint on a dataset")
    s.add_argument("checkpoint")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_eval)

    for name, func, help_ in (("matrix", cmd_matrix, "transfer matrix over plans and pairs"),
                              ("sweep-dropout", cmd_sweep_dropout, "dropout rate sweep")):
        s = sub.add_parser(name, parents=[common, train_flags], help=help_)
        s.add_argument("--pair", nargs=2, action="append", metavar=("CHECKPOINT", "DATASET"))
        s.add_argument("--out")
        if name == "matrix":
            s.add_argument("--settings", help="comma-separated plans (default: the eight standard settings)")
            s.add_argument("--include-baseline", action="store_true")
        else:
            s.add_argument("--rates", help="comma-separated rates (default 0.0..0.9)")
            s.add_argument("--plan")
        s.set_defaults(func=func)

    s = sub.add_parser("sweep-activation", parents=[common, train_flags], help="activation function grid")
    s.add_argument("--source", required=True, help="source dataset")
    s.add_argument("--target", required=True, help="target dataset")
    s.add_argument("--source-acts", default="Iden,Tanh,ReLU")
    s.add_argument("--target-acts", default="Iden,Tanh,ReLU")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_activation)

    s = sub.add_parser("report", parents=[common], help="render recorded results")
    s.add_argument("results")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, DatasetFormatError, VectorFileError, CheckpointError, TransferError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
