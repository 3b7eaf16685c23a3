"""Training loop, evaluation, checkpoint selection and ablation runs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .datakit import Document, Schema, ScoreReport, score
from .encoder import Vocab
from .matching import NonFiniteCostError
from .model import Model, TrainConfig

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "step", "L_total", "D_hat", "avg_hausdorff_diag", "L_er", "L_epc",
                  "dev_P", "dev_R", "dev_F1")


class DivergenceError(RuntimeError):
    def __init__(self, doc_id, value):
        super().__init__(f"non-finite loss {value!r} on document {doc_id}")
        self.doc_id = doc_id


@dataclass
class RunArtifacts:
    checkpoint: Path | None
    metrics: Path | None
    report_path: Path | None
    config_path: Path | None
    report: ScoreReport
    model: Model
    epochs_run: int
    best_epoch: int
    metrics_rows: list = field(default_factory=list)

    def metrics_csv(self) -> str:
        return _render_rows(self.metrics_rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _render_rows(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def evaluate(model: Model, docs: list[Document]) -> ScoreReport:
    preds = []
    for doc in docs:
        dc.reset_tape()
        preds.append(model.predict(doc))
    return score(preds, [d.events_by_surface() for d in docs], model.schema)


def forward_document(doc: Document, model: Model, training: bool = True):
    """Proxy predictions and the entity loss for one document."""
    out = model.forward(doc, training=training)
    return out.predictions, out.l_e


def _adam_arrays(opt: dc.Adam) -> dict[str, np.ndarray]:
    arrays = {}
    for name in opt.params:
        arrays[f"adam.m.{name}"] = opt.state.m[name]
        arrays[f"adam.v.{name}"] = opt.state.v[name]
    return arrays


def train(corpus: list[Document], dev: list[Document], config: TrainConfig, schema: Schema,
          out_dir=None, vocab: Vocab | None = None, resume: bool = False) -> RunArtifacts:
    """Minimise mean per-document loss with Adam; keep the best dev-F1 epoch.

    With ``out_dir`` set, writes ``best.ckpt``, ``last.ckpt`` (rewritten after
    every epoch, carries optimiser state for resuming), ``metrics.csv``,
    ``config.json`` and ``report.json``.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    if not dev:
        raise ValueError("dev corpus is empty")
    config.validate()
    for doc in corpus:
        doc.validate(schema)
        if len(doc.events) > config.n_proxies:
            raise ValueError(f"document {doc.id} has {len(doc.events)} events > n_proxies={config.n_proxies}")
    vocab = vocab or Vocab.from_documents(corpus)
    model = Model(config, vocab, schema)
    opt = dc.Adam(model.params, lr=config.lr_rest, lr_overrides=model.lr_overrides())

    out = Path(out_dir) if out_dir is not None else None
    paths = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / v for k, v in (("best", "best.ckpt"), ("last", "last.ckpt"), ("metrics", "metrics.csv"),
                                          ("config", "config.json"), ("report", "report.json"))}
        paths["config"].write_text(json.dumps({"train": config.to_dict()}, indent=2, sort_keys=True) + "\n")

    rows: list[dict] = []
    start_epoch, step = 1, 0
    best_f1, best_epoch = -1.0, 0
    best_arrays = {k: v.data.copy() for k, v in model.params.items()}

    if resume and out is not None and paths["last"].exists():
        loaded, rest, meta = Model.load(paths["last"])
        for k, t in model.params.items():
            t.data = loaded.params[k].data.copy()
            opt.state.m[k] = rest[f"adam.m.{k}"].copy()
            opt.state.v[k] = rest[f"adam.v.{k}"].copy()
        state = meta["train_state"]
        opt.state.step = state["adam_step"]
        start_epoch, step = state["epoch"] + 1, state["step"]
        best_f1, best_epoch = state["best_f1"], state["best_epoch"]
        if paths["best"].exists():
            best_model, _, _ = Model.load(paths["best"])
            best_arrays = {k: v.data.copy() for k, v in best_model.params.items()}
        if paths["metrics"].exists():
            with open(paths["metrics"], newline="") as fh:
                rows = [r for r in csv.DictReader(fh) if int(r["epoch"]) <= state["epoch"]]
        log.info("resumed after epoch %d", state["epoch"])

    epochs_run = start_epoch - 1
    done = best_epoch > 0 and epochs_run - best_epoch >= config.patience
    for epoch in range(start_epoch, config.max_epochs + 1):
        if done:
            break
        order = np.random.default_rng([config.seed, 100, epoch]).permutation(len(corpus))
        batch_parts: list = []
        for pos, idx in enumerate(order):
            doc = corpus[idx]
            dc.reset_tape()
            rng = np.random.default_rng([config.seed, 200, epoch, int(idx)])
            try:
                parts = model.loss(doc, rng)
            except NonFiniteCostError:
                raise DivergenceError(doc.id, float("nan")) from None
            value = parts.total.item()
            if not math.isfinite(value):
                raise DivergenceError(doc.id, value)
            dc.backward(parts.total)
            batch_parts.append((value, parts))
            if len(batch_parts) == config.batch_size or pos == len(order) - 1:
                k = len(batch_parts)
                opt.step(scale=1.0 / k)
                opt.zero_grad()
                step += 1
                rows.append({
                    "epoch": epoch, "step": step,
                    "L_total": sum(v for v, _ in batch_parts) / k,
                    "D_hat": sum(p.d_hat for _, p in batch_parts) / k,
                    "avg_hausdorff_diag": sum(p.avg_hausdorff for _, p in batch_parts) / k,
                    "L_er": sum(p.l_er for _, p in batch_parts) / k,
                    "L_epc": sum(p.l_epc for _, p in batch_parts) / k,
                })
                batch_parts = []
        dc.reset_tape()
        report = evaluate(model, dev)
        rows[-1].update(dev_P=report.precision, dev_R=report.recall, dev_F1=report.f1)
        log.info("epoch %d loss %.4f dev F1 %.4f", epoch, rows[-1]["L_total"], report.f1)
        if report.f1 > best_f1:
            best_f1, best_epoch = report.f1, epoch
            best_arrays = {k: v.data.copy() for k, v in model.params.items()}
            if out is not None:
                model.save(paths["best"], extra_meta={"epoch": epoch, "dev_f1": report.f1})
        if out is not None:
            _atomic_write(paths["metrics"], _render_rows(rows))
            model.save(paths["last"], extra_arrays=_adam_arrays(opt), extra_meta={"train_state": {
                "epoch": epoch, "step": step, "adam_step": opt.state.step,
                "best_f1": best_f1, "best_epoch": best_epoch,
            }})
        epochs_run = epoch
        # patience p tolerates p epochs without a new best; p = 0 stops after one epoch
        done = epoch - best_epoch >= config.patience

    for k, t in model.params.items():
        t.data = best_arrays[k].copy()
    final = evaluate(model, dev)
    if out is not None:
        paths["report"].write_text(json.dumps(final.to_json(), indent=2, sort_keys=True) + "\n")
    return RunArtifacts(
        checkpoint=paths.get("best"), metrics=paths.get("metrics"), report_path=paths.get("report"),
        config_path=paths.get("config"), report=final, model=model, epochs_run=epochs_run,
        best_epoch=best_epoch, metrics_rows=rows,
    )


def run_ablation(mode: str, corpus: list[Document], dev: list[Document], config: TrainConfig,
                 schema: Schema, out_dir=None, eval_docs: list[Document] | None = None) -> ScoreReport:
    """Train under ``mode`` and score on ``eval_docs`` (default: dev)."""
    run = train(corpus, dev, replace(config, ablation=mode), schema, out_dir=out_dir)
    if eval_docs is None:
        return run.report
    return evaluate(run.model, eval_docs)
