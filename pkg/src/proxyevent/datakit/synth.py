"""Deterministic synthetic multi-event corpus.

Each document has a fixed number of numbered sentences. Every event is
rendered into its own sentence as ``<sK> cueT ... H_r body ... H_r' body``
where ``cueT`` signals the event type and ``H_r`` opens an entity filling
role ``r``. The remaining sentences are filler text, optionally carrying a
distractor entity that plays no role. Later events may reuse an entity of
an earlier event (same role), which is the multi-event overlap the model
has to untangle.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .corpus import Document, Entity
from .schema import EventRecord, Schema

RESERVED = 2  # pad + unk
NUM_FILLER_WORDS = 8


class GenConfigError(ValueError):
    pass


@dataclass
class GenConfig:
    seed: int = 0
    vocab_size: int = 64
    num_docs: int = 300
    num_event_types: int = 3
    num_roles: int = 6
    min_roles_per_type: int = 3
    max_roles_per_type: int = 5
    min_events: int = 1
    max_events: int = 3
    event_count_weights: tuple = (0.5, 0.3, 0.2)
    share_prob: float = 0.3
    distractor_prob: float = 0.3
    sentences_per_doc: int = 4
    tokens_per_sentence: int = 8

    def validate(self) -> None:
        for f in ("vocab_size", "num_docs", "num_event_types", "num_roles", "min_roles_per_type",
                  "max_roles_per_type", "min_events", "max_events", "sentences_per_doc",
                  "tokens_per_sentence"):
            if getattr(self, f) < 1:
                raise GenConfigError(f"{f} must be >= 1, got {getattr(self, f)}")
        if not 0.0 <= self.share_prob <= 1.0:
            raise GenConfigError(f"share_prob must lie in [0, 1], got {self.share_prob}")
        if not 0.0 <= self.distractor_prob <= 1.0:
            raise GenConfigError(f"distractor_prob must lie in [0, 1], got {self.distractor_prob}")
        if self.min_roles_per_type > self.max_roles_per_type:
            raise GenConfigError("min_roles_per_type exceeds max_roles_per_type")
        if self.max_roles_per_type > self.num_roles:
            raise GenConfigError(f"max_roles_per_type {self.max_roles_per_type} exceeds num_roles {self.num_roles}")
        if self.min_events > self.max_events:
            raise GenConfigError("min_events exceeds max_events")
        if self.max_events > self.sentences_per_doc:
            raise GenConfigError("each event needs its own sentence: raise sentences_per_doc")
        if len(self.event_count_weights) not in (0, self.max_events - self.min_events + 1):
            raise GenConfigError("event_count_weights needs one weight per event count")
        body = self.num_body_tokens
        if body < 2:
            raise GenConfigError(
                f"vocab_size {self.vocab_size} leaves {body} entity body tokens; need at least 2"
            )
        per_doc = self.max_events * self.max_roles_per_type + self.sentences_per_doc
        if body + body * body < per_doc:
            raise GenConfigError(
                f"vocab_size {self.vocab_size} cannot produce {per_doc} distinct fillers per document"
            )

    @property
    def num_body_tokens(self) -> int:
        return (self.vocab_size - RESERVED - self.sentences_per_doc - self.num_event_types
                - self.num_roles - NUM_FILLER_WORDS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["event_count_weights"] = list(self.event_count_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise GenConfigError(f"unknown generator options: {sorted(unknown)}")
        d = dict(d)
        if "event_count_weights" in d:
            d["event_count_weights"] = tuple(d["event_count_weights"])
        return cls(**d)


@dataclass(frozen=True)
class Inventory:
    markers: tuple[str, ...]
    cues: tuple[str, ...]
    heads: tuple[str, ...]
    fillers: tuple[str, ...]
    body: tuple[str, ...]

    def all_tokens(self) -> list[str]:
        return [*self.markers, *self.cues, *self.heads, *self.fillers, *self.body]


def inventory(config: GenConfig) -> Inventory:
    return Inventory(
        markers=tuple(f"<s{i + 1}>" for i in range(config.sentences_per_doc)),
        cues=tuple(f"cue{i}" for i in range(config.num_event_types)),
        heads=tuple(f"H{i}" for i in range(config.num_roles)),
        fillers=tuple(f"w{i}" for i in range(NUM_FILLER_WORDS)),
        body=tuple(f"b{i}" for i in range(config.num_body_tokens)),
    )


def build_schema(config: GenConfig) -> Schema:
    """Role R0 belongs to every type so that events of any two types can share an entity."""
    config.validate()
    rng = np.random.default_rng([config.seed, 1])
    roles = tuple(f"R{i}" for i in range(config.num_roles))
    types = tuple(f"T{i}" for i in range(config.num_event_types))
    type_roles = {}
    for t in types:
        k = int(rng.integers(config.min_roles_per_type, config.max_roles_per_type + 1))
        extra = rng.choice(np.arange(1, config.num_roles), size=k - 1, replace=False)
        type_roles[t] = tuple(roles[i] for i in sorted([0, *extra.tolist()]))
    return Schema(types, roles, type_roles)


def generate(config: GenConfig) -> list[Document]:
    config.validate()
    schema = build_schema(config)
    inv = inventory(config)
    rng = np.random.default_rng([config.seed, 2])
    return [_document(i, config, schema, inv, rng) for i in range(config.num_docs)]


def _document(doc_id: int, config: GenConfig, schema: Schema, inv: Inventory, rng) -> Document:
    counts = np.arange(config.min_events, config.max_events + 1)
    weights = np.asarray(config.event_count_weights or np.ones(len(counts)), dtype=float)
    num_events = int(rng.choice(counts, p=weights / weights.sum()))
    slots = sorted(rng.choice(config.sentences_per_doc, size=num_events, replace=False).tolist())

    used_surfaces: set[str] = set()

    def new_surface(role_idx: int) -> str:
        while True:
            length = int(rng.integers(1, 3))
            body = [inv.body[int(j)] for j in rng.integers(0, len(inv.body), size=length)]
            surface = " ".join([inv.heads[role_idx], *body])
            if surface not in used_surfaces:
                used_surfaces.add(surface)
                return surface

    surfaces: list[str] = []
    events: list[tuple[str, dict[str, int]]] = []
    for e in range(num_events):
        etype = schema.event_types[int(rng.integers(schema.num_types))]
        legal = schema.type_roles[etype]
        args: dict[str, int] = {}
        if e > 0 and rng.random() < config.share_prob:
            # reuse an entity from an earlier event in a role both types allow
            options = [(r, eid) for _, prev in events for r, eid in prev.items() if r in legal]
            role, eid = options[int(rng.integers(len(options)))]
            args[role] = eid
        for role in legal:
            if role in args:
                continue
            surfaces.append(new_surface(schema.roles.index(role)))
            args[role] = len(surfaces) - 1
        events.append((etype, args))

    sentences: list[list[str]] = []
    mentions: dict[int, list[tuple[int, int, int]]] = {}
    for s in range(config.sentences_per_doc):
        tokens = [inv.markers[s]]
        if s in slots:
            etype, args = events[slots.index(s)]
            tokens.append(inv.cues[schema.event_types.index(etype)])
            order = list(args.items())
            rng.shuffle(order)
            for _, eid in order:
                if rng.random() < 0.5:
                    tokens.append(inv.fillers[int(rng.integers(len(inv.fillers)))])
                words = surfaces[eid].split(" ")
                mentions.setdefault(eid, []).append((s, len(tokens), len(tokens) + len(words)))
                tokens.extend(words)
        else:
            want = config.tokens_per_sentence - 1
            distractor = rng.random() < config.distractor_prob
            at = int(rng.integers(0, want)) if distractor else -1
            for k in range(want):
                if k == at:
                    surfaces.append(new_surface(int(rng.integers(config.num_roles))))
                    eid = len(surfaces) - 1
                    words = surfaces[eid].split(" ")
                    mentions.setdefault(eid, []).append((s, len(tokens), len(tokens) + len(words)))
                    tokens.extend(words)
                else:
                    tokens.append(inv.fillers[int(rng.integers(len(inv.fillers)))])
        while len(tokens) < config.tokens_per_sentence:
            tokens.append(inv.fillers[int(rng.integers(len(inv.fillers)))])
        sentences.append(tokens)

    entities = [Entity(i, surf, tuple(mentions[i])) for i, surf in enumerate(surfaces)]
    records = [EventRecord.from_dict(t, a) for t, a in events]
    doc = Document(doc_id, sentences, entities, records)
    doc.validate(schema)
    return doc


def corpus_stats(docs: list[Document]) -> dict:
    n = len(docs)
    single = sum(1 for d in docs if len(d.events) == 1)
    multi = sum(1 for d in docs if len(d.events) > 1)
    return {
        "documents": n,
        "events": sum(len(d.events) for d in docs),
        "entities": sum(len(d.entities) for d in docs),
        "single_event_docs": single,
        "multi_event_docs": multi,
        "single_event_fraction": single / n if n else 0.0,
        "multi_event_fraction": multi / n if n else 0.0,
    }
