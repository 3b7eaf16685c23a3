"""Documents and the canonical JSONL corpus format.

One document per line::

    {"format_version": 1, "id": 7,
     "sentences": [["<s1>", "cue0", "H2", "b5"], ...],
     "entities": [{"id": 0, "surface": "H2 b5", "mentions": [[0, 2, 4]]}],
     "events": [{"type": "T0", "arguments": {"R2": 0}}]}

Mentions are ``[sentence, start, end)`` token offsets. Entity identity is
the surface token sequence, so surfaces are unique within a document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .schema import EventRecord, Schema

FORMAT_VERSION = 1


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Entity:
    id: int
    surface: str
    mentions: tuple[tuple[int, int, int], ...]


@dataclass
class Document:
    id: int
    sentences: list[list[str]]
    entities: list[Entity] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)

    def entity(self, entity_id: int) -> Entity:
        for e in self.entities:
            if e.id == entity_id:
                return e
        raise KeyError(entity_id)

    def events_by_surface(self) -> list[EventRecord]:
        """Gold events with entity ids replaced by surface strings."""
        surface = {e.id: e.surface for e in self.entities}
        return [EventRecord(ev.type, frozenset((r, surface[e]) for r, e in ev.arguments)) for ev in self.events]

    def bio_labels(self) -> list[list[str]]:
        labels = [["O"] * len(s) for s in self.sentences]
        for ent in self.entities:
            for s, start, end in ent.mentions:
                labels[s][start] = "B"
                for t in range(start + 1, end):
                    labels[s][t] = "I"
        return labels

    def validate(self, schema: Schema | None = None) -> None:
        seen_surface = set()
        covered = set()
        ids = {e.id for e in self.entities}
        if len(ids) != len(self.entities):
            raise CorpusError(f"doc {self.id}: duplicate entity ids")
        for i, sent in enumerate(self.sentences):
            if not sent:
                raise CorpusError(f"doc {self.id}: sentence {i} is empty")
        for ent in self.entities:
            if ent.surface in seen_surface:
                raise CorpusError(f"doc {self.id}: surface {ent.surface!r} used by two entity ids")
            seen_surface.add(ent.surface)
            if not ent.mentions:
                raise CorpusError(f"doc {self.id}: entity {ent.id} has no mentions")
            for s, start, end in ent.mentions:
                if not (0 <= s < len(self.sentences) and 0 <= start < end <= len(self.sentences[s])):
                    raise CorpusError(f"doc {self.id}: entity {ent.id} span {(s, start, end)} out of bounds")
                if " ".join(self.sentences[s][start:end]) != ent.surface:
                    raise CorpusError(f"doc {self.id}: entity {ent.id} span {(s, start, end)} does not read {ent.surface!r}")
                for t in range(start, end):
                    if (s, t) in covered:
                        raise CorpusError(f"doc {self.id}: overlapping mentions at sentence {s} token {t}")
                    covered.add((s, t))
        for ev in self.events:
            for _, eid in ev.arguments:
                if eid not in ids:
                    raise CorpusError(f"doc {self.id}: event {ev.type!r} references unknown entity {eid}")
            if schema is not None:
                schema.check_event(ev)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "id": self.id,
            "sentences": self.sentences,
            "entities": [
                {"id": e.id, "surface": e.surface, "mentions": [list(m) for m in e.mentions]}
                for e in self.entities
            ],
            "events": [{"type": ev.type, "arguments": ev.as_dict()} for ev in self.events],
        }

    @classmethod
    def from_json(cls, obj) -> "Document":
        return _parse_document(obj)


def _require(obj, key, path, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise CorpusError(f"missing field {path}{key}")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise CorpusError(f"field {path}{key} has type {type(value).__name__}")
    return value


def _parse_document(obj) -> Document:
    if not isinstance(obj, dict):
        raise CorpusError("document is not a JSON object")
    version = obj.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise CorpusError(f"field format_version: unsupported value {version}")
    doc_id = _require(obj, "id", "", int)
    sentences = _require(obj, "sentences", "", list)
    for i, s in enumerate(sentences):
        if not isinstance(s, list) or not all(isinstance(t, str) for t in s):
            raise CorpusError(f"field sentences[{i}] must be a list of strings")
    entities = []
    for i, e in enumerate(_require(obj, "entities", "", list)):
        path = f"entities[{i}]."
        mentions = _require(e, "mentions", path, list)
        spans = []
        for j, m in enumerate(mentions):
            if not (isinstance(m, list) and len(m) == 3 and all(isinstance(x, int) for x in m)):
                raise CorpusError(f"field {path}mentions[{j}] must be [sentence, start, end]")
            spans.append(tuple(m))
        entities.append(Entity(_require(e, "id", path, int), _require(e, "surface", path, str), tuple(spans)))
    events = []
    for i, ev in enumerate(_require(obj, "events", "", list)):
        path = f"events[{i}]."
        etype = _require(ev, "type", path, str)
        args = _require(ev, "arguments", path, dict)
        for role, eid in args.items():
            if not isinstance(eid, int):
                raise CorpusError(f"field {path}arguments.{role} must be an entity id")
        events.append(EventRecord.from_dict(etype, args))
    return Document(doc_id, [list(s) for s in sentences], entities, events)


def write_jsonl(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n")


def read_jsonl(path, schema: Schema | None = None) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = _parse_document(json.loads(line))
                doc.validate(schema)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            except (CorpusError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            docs.append(doc)
    return docs
