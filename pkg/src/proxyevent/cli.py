"""Command-line entry point: generate, train, eval, export-embeddings.

Settings come from an INI file with one section per stage ([generate],
[train], [data], [run]); ``--set section.key=value`` overrides any entry and
the dedicated flags (--seed, --docs, --ablation) override both.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

from . import __version__
from .datakit import (
    CorpusError,
    GenConfig,
    Schema,
    build_schema,
    corpus_stats,
    generate,
    read_jsonl,
    write_jsonl,
)
from .diffcore import CheckpointError
from .encoder import Vocab
from .model import Model, TrainConfig
from .trainer import DivergenceError, evaluate, train

log = logging.getLogger("proxyevent")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_DIVERGENCE = 5
EXIT_LOOKUP = 6

SPLITS = ("train", "dev", "test")


class CliError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- config


def default_config() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    gen = GenConfig().to_dict()
    gen["event_count_weights"] = ",".join(str(w) for w in gen["event_count_weights"])
    gen.update(dev_docs=50, test_docs=50)
    cp["generate"] = {k: str(v) for k, v in gen.items()}
    cp["train"] = {k: str(v) for k, v in TrainConfig().to_dict().items()}
    cp["data"] = {"dir": "data", "train": "", "dev": "", "test": "", "schema": ""}
    cp["run"] = {"root": "runs", "name": ""}
    return cp


def apply_override(cp: configparser.ConfigParser, item: str) -> None:
    key, sep, value = item.partition("=")
    section, dot, option = key.strip().partition(".")
    if not sep or not dot or not option:
        raise CliError(f"--set expects section.key=value, got {item!r}")
    if not cp.has_section(section):
        raise CliError(f"--set: unknown section {section!r} (have {cp.sections()})")
    if not cp.has_option(section, option):
        raise CliError(f"--set: unknown option {option!r} in [{section}]")
    cp[section][option] = value.strip()


def load_config(path=None, overrides=()) -> configparser.ConfigParser:
    cp = default_config()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise CliError(f"config file not found: {path}", EXIT_IO)
        user = configparser.ConfigParser(interpolation=None)
        try:
            user.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise CliError(f"{path}: {exc}") from None
        for section in user.sections():
            if not cp.has_section(section):
                raise CliError(f"{path}: unknown section [{section}]")
            for option, value in user[section].items():
                if not cp.has_option(section, option):
                    raise CliError(f"{path}: unknown option {option!r} in [{section}]")
                cp[section][option] = value
    for item in overrides:
        apply_override(cp, item)
    return cp


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise CliError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _dataclass_from(cp, section: str, cls):
    defaults = cls()
    values = {}
    for f in dataclasses.fields(cls):
        values[f.name] = _coerce(section, f.name, cp[section][f.name], getattr(defaults, f.name))
    return cls(**values)


def gen_config(cp) -> tuple[GenConfig, int, int]:
    cfg = _dataclass_from(cp, "generate", GenConfig)
    dev = _coerce("generate", "dev_docs", cp["generate"]["dev_docs"], 0)
    test = _coerce("generate", "test_docs", cp["generate"]["test_docs"], 0)
    return cfg, dev, test


def train_config(cp) -> TrainConfig:
    return _dataclass_from(cp, "train", TrainConfig)


def data_paths(cp) -> dict[str, Path]:
    base = Path(cp["data"]["dir"])
    out = {}
    for name in (*SPLITS, "schema"):
        explicit = cp["data"][name].strip()
        default = base / ("schema.json" if name == "schema" else f"{name}.jsonl")
        out[name] = Path(explicit) if explicit else default
    return out


def _apply_common(cp, args) -> None:
    if getattr(args, "seed", None) is not None:
        cp["generate"]["seed"] = str(args.seed)
        cp["train"]["seed"] = str(args.seed)
    if getattr(args, "docs", None) is not None:
        cp["generate"]["num_docs"] = str(args.docs)
    if getattr(args, "ablation", None) is not None:
        cp["train"]["ablation"] = args.ablation
    if getattr(args, "data", None) is not None:
        cp["data"]["dir"] = str(args.data)
    if getattr(args, "runs", None) is not None:
        cp["run"]["root"] = str(args.runs)


# ---------------------------------------------------------------- helpers


def _load_corpus(path: Path, schema: Schema | None):
    if not path.is_file():
        raise CliError(f"corpus file not found: {path}", EXIT_IO)
    return read_jsonl(path, schema)


def _load_schema(path: Path) -> Schema:
    if not path.is_file():
        raise CliError(f"schema file not found: {path}", EXIT_IO)
    return Schema.load(path)


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint file, a run directory, or a ``latest`` pointer file."""
    p = Path(path)
    if p.is_file() and p.name == "latest":
        p = p.parent / p.read_text(encoding="utf-8").strip()
    if p.is_dir():
        p = p / "best.ckpt"
    if not p.is_file():
        raise CliError(f"checkpoint not found: {p}", EXIT_IO)
    return p


def _new_run_dir(root: Path, label: str) -> Path:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    base = f"{stamp}-{label}"
    run = root / base
    k = 1
    while run.exists():
        k += 1
        run = root / f"{base}-{k}"
    run.mkdir(parents=True)
    return run


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cp = load_config(args.config, args.set)
    _apply_common(cp, args)
    cfg, n_dev, n_test = gen_config(cp)
    n_train = cfg.num_docs - n_dev - n_test
    if n_dev < 1 or n_test < 0 or n_train < 1:
        raise CliError(f"split train/dev/test = {n_train}/{n_dev}/{n_test} is invalid for {cfg.num_docs} documents")
    docs = generate(cfg)
    schema = build_schema(cfg)
    paths = data_paths(cp)
    parts = {"train": docs[:n_train], "dev": docs[n_train:n_train + n_dev], "test": docs[n_train + n_dev:]}
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    for name, chunk in parts.items():
        write_jsonl(chunk, paths[name])
    schema.save(paths["schema"])
    snapshot = paths["schema"].parent / "generate.ini"
    with open(snapshot, "w", encoding="utf-8") as fh:
        cp.write(fh)
    stats = {"all": corpus_stats(docs), **{name: corpus_stats(chunk) for name, chunk in parts.items()}}
    stats["files"] = {k: str(v) for k, v in paths.items()}
    _print_json(stats)
    return EXIT_OK


def cmd_train(args) -> int:
    if args.resume is not None:
        run = Path(args.resume)
        snap = run / "config.ini"
        if not snap.is_file():
            raise CliError(f"no config snapshot in {run}", EXIT_IO)
        cp = load_config(snap)
    else:
        cp = load_config(args.config, args.set)
        _apply_common(cp, args)
    tcfg = train_config(cp)
    tcfg.validate()
    paths = data_paths(cp)
    schema = _load_schema(paths["schema"])
    corpus = _load_corpus(paths["train"], schema)
    dev = _load_corpus(paths["dev"], schema)

    if args.resume is None:
        root = Path(cp["run"]["root"])
        run = _new_run_dir(root, cp["run"]["name"] or tcfg.ablation)
        # the snapshot pins absolute data paths so it can be replayed from anywhere
        for name, p in paths.items():
            cp["data"][name] = str(p.resolve())
        cp["data"]["dir"] = str(paths["train"].parent.resolve())
        cp["run"]["root"] = str(root.resolve())
        with open(run / "config.ini", "w", encoding="utf-8") as fh:
            cp.write(fh)
        (root / "latest").write_text(run.name + "\n", encoding="utf-8")
    print(f"run directory: {run}", file=sys.stderr)
    vocab = Vocab.from_documents(corpus)
    vocab.save(run / "vocab.txt")
    artifacts = train(corpus, dev, tcfg, schema, out_dir=run, vocab=vocab, resume=args.resume is not None)
    summary = {
        "run_dir": str(run),
        "checkpoint": str(artifacts.checkpoint),
        "best_epoch": artifacts.best_epoch,
        "epochs_run": artifacts.epochs_run,
        "ablation": tcfg.ablation,
        "dev": artifacts.report.to_json(),
    }
    _print_json(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = resolve_checkpoint(args.checkpoint)
    model, _, _ = Model.load(ckpt)
    docs = _load_corpus(Path(args.corpus), model.schema)
    report = evaluate(model, docs).to_json()
    report["checkpoint"] = str(ckpt)
    report["corpus"] = str(args.corpus)
    out = Path(args.out) if args.out else ckpt.parent / f"eval-{Path(args.corpus).stem}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_json(report)
    return EXIT_OK


def export_rows(model: Model, doc) -> list[list]:
    """(kind, id, membership bits, vector...) rows for one document.

    Entity rows are per mention, so an entity written twice in the text
    gives two rows with the same id. A proxy's bit j is set when the
    assignment pairs it with gold event j.
    """
    mentions, proxies = model.embeddings(doc)
    events = doc.events
    span_owner = {m: e.id for e in doc.entities for m in e.mentions}
    rows = []
    for k, span in enumerate(mentions.spans):
        eid = span_owner[span]
        bits = "".join("1" if any(x == eid for _, x in ev.arguments) else "0" for ev in events)
        rows.append(["entity", eid, bits, *mentions.vectors.data[k].tolist()])
    cols = model.loss(doc).assignment.cols
    for i in range(proxies.shape[0]):
        bits = "".join("1" if cols[i] == j else "0" for j in range(len(events)))
        rows.append(["proxy", i, bits, *proxies[i].tolist()])
    return rows


def cmd_export_embeddings(args) -> int:
    ckpt = resolve_checkpoint(args.checkpoint)
    model, _, _ = Model.load(ckpt)
    docs = _load_corpus(Path(args.corpus), model.schema)
    by_id = {d.id: d for d in docs}
    if args.doc_id not in by_id:
        raise CliError(f"document id {args.doc_id} not found in {args.corpus}", EXIT_LOOKUP)
    rows = export_rows(model, by_id[args.doc_id])
    header = ["kind", "id", "membership", *(f"h{k}" for k in range(model.config.d_h))]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([r[0], r[1], r[2], *(repr(x) for x in r[3:])])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxyevent", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", help="python logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_help="override [generate] seed and [train] seed"):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
        sp.add_argument("--seed", type=int, help=seed_help)

    g = sub.add_parser("generate", help="write a synthetic corpus (train/dev/test JSONL + schema)")
    common(g)
    g.add_argument("--docs", type=int, help="total document count")
    g.add_argument("--data", help="output directory (overrides [data] dir)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model into a new timestamped run directory")
    common(t)
    t.add_argument("--ablation", choices=["full", "no_hypernetwork", "no_proxy", "no_hdm"])
    t.add_argument("--data", help="corpus directory (overrides [data] dir)")
    t.add_argument("--runs", help="root for run directories (overrides [run] root)")
    t.add_argument("--resume", metavar="RUN_DIR",
                   help="continue an interrupted run from its last checkpoint; uses the run's config snapshot")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("checkpoint", help="checkpoint file, run directory, or a 'latest' pointer file")
    e.add_argument("corpus", help="JSONL corpus")
    e.add_argument("--out", help="report path (default: eval-<corpus>.json next to the checkpoint)")
    e.add_argument("--seed", type=int, help="accepted for uniformity; evaluation draws no random numbers")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export-embeddings", help="CSV of entity mention and proxy vectors for one document")
    x.add_argument("checkpoint")
    x.add_argument("corpus")
    x.add_argument("--doc-id", type=int, required=True)
    x.add_argument("--out", help="CSV path (default stdout)")
    x.add_argument("--seed", type=int, help="accepted for uniformity; export draws no random numbers")
    x.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CorpusError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
