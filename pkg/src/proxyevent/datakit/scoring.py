"""Role-level micro P/R/F1 with greedy same-type event matching."""

from __future__ import annotations

from dataclasses import dataclass, field

from .schema import EventRecord, Schema

FORMAT_VERSION = 1
MATCHING_RULE = (
    "both event lists are put in canonical order (type, sorted arguments); per document, each "
    "predicted event in turn takes the unmatched same-type gold event sharing the most "
    "(role, entity) pairs, ties to the lowest canonical gold index"
)


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "Counts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # equals 2PR/(P+R) but with a single rounding step
        return 2 * self.tp / (2 * self.tp + self.fp + self.fn) if self.tp else 0.0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class ScoreReport:
    overall: Counts = field(default_factory=Counts)
    single: Counts = field(default_factory=Counts)
    multi: Counts = field(default_factory=Counts)
    per_type: dict[str, Counts] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f1_single": self.single.f1,
            "f1_multi": self.multi.f1,
            "counts": self.overall.as_dict(),
            "single": self.single.as_dict(),
            "multi": self.multi.as_dict(),
            "per_type": {t: c.as_dict() for t, c in sorted(self.per_type.items())},
            "matching": MATCHING_RULE,
        }


def _check(events: list[EventRecord], schema: Schema | None) -> None:
    if schema is None:
        return
    for ev in events:
        schema.check_event(ev)


def _canonical(events: list[EventRecord]) -> list[EventRecord]:
    return sorted(events, key=lambda e: (e.type, sorted((r, str(x)) for r, x in e.arguments)))


def match_document(pred: list[EventRecord], gold: list[EventRecord]) -> dict[str, Counts]:
    """Counts per event type for one document.

    Sorting first makes the result independent of the order either side
    was listed in.
    """
    pred, gold = _canonical(pred), _canonical(gold)
    out: dict[str, Counts] = {}
    taken = [False] * len(gold)
    for p in pred:
        c = out.setdefault(p.type, Counts())
        best, best_overlap = -1, -1
        for j, g in enumerate(gold):
            if taken[j] or g.type != p.type:
                continue
            overlap = len(p.arguments & g.arguments)
            if overlap > best_overlap:
                best, best_overlap = j, overlap
        if best < 0:
            c.fp += len(p.arguments)
            continue
        taken[best] = True
        c.tp += best_overlap
        c.fp += len(p.arguments) - best_overlap
        c.fn += len(gold[best].arguments) - best_overlap
    for j, g in enumerate(gold):
        if not taken[j]:
            out.setdefault(g.type, Counts()).fn += len(g.arguments)
    return out


def score(predicted: list[list[EventRecord]], gold: list[list[EventRecord]],
          schema: Schema | None = None) -> ScoreReport:
    """Score parallel lists of per-document event lists.

    Raises :class:`SchemaError` for types or roles outside ``schema``.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted documents vs {len(gold)} gold documents")
    report = ScoreReport()
    if schema is not None:
        report.per_type = {t: Counts() for t in schema.event_types}
    for pred_doc, gold_doc in zip(predicted, gold):
        _check(pred_doc, schema)
        _check(gold_doc, schema)
        doc_counts = Counts()
        for etype, c in match_document(pred_doc, gold_doc).items():
            report.per_type.setdefault(etype, Counts()).add(c)
            doc_counts.add(c)
        report.overall.add(doc_counts)
        if len(gold_doc) == 1:
            report.single.add(doc_counts)
        elif len(gold_doc) > 1:
            report.multi.add(doc_counts)
    return report


def pair_count(events: list[EventRecord]) -> int:
    return sum(len(e.arguments) for e in events)

