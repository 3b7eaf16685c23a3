"""Event schema and event records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NULL_NAME = "<null>"
FORMAT_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    """One event: a type name plus a set of (role, entity) pairs.

    Entities are opaque hashable keys (gold entity ids or surface strings).
    """

    type: str
    arguments: frozenset = frozenset()
    confidence: dict | None = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        roles = [r for r, _ in self.arguments]
        if len(roles) != len(set(roles)):
            raise SchemaError(f"event {self.type!r} fills a role twice: {sorted(roles)}")

    @classmethod
    def from_dict(cls, event_type: str, arguments: dict) -> "EventRecord":
        return cls(event_type, frozenset(arguments.items()))

    def as_dict(self) -> dict:
        return dict(sorted(self.arguments))


@dataclass(frozen=True)
class Schema:
    """Non-null event types with their legal roles.

    Index 0 is reserved for null in both the type and the role label spaces,
    so type ``event_types[i]`` has label ``i + 1``.
    """

    event_types: tuple[str, ...]
    roles: tuple[str, ...]
    type_roles: dict

    def __post_init__(self):
        if len(set(self.event_types)) != len(self.event_types):
            raise SchemaError("duplicate event type names")
        if len(set(self.roles)) != len(self.roles):
            raise SchemaError("duplicate role names")
        for t in self.event_types:
            if t not in self.type_roles:
                raise SchemaError(f"event type {t!r} has no role list")
            for r in self.type_roles[t]:
                if r not in self.roles:
                    raise SchemaError(f"role {r!r} of type {t!r} is not in the global role list")

    @property
    def num_types(self) -> int:
        return len(self.event_types)

    @property
    def num_roles(self) -> int:
        return len(self.roles)

    def type_label(self, name: str) -> int:
        try:
            return self.event_types.index(name) + 1
        except ValueError:
            raise SchemaError(f"unknown event type {name!r}") from None

    def role_label(self, name: str) -> int:
        try:
            return self.roles.index(name) + 1
        except ValueError:
            raise SchemaError(f"unknown role {name!r}") from None

    def type_name(self, label: int) -> str:
        return NULL_NAME if label == 0 else self.event_types[label - 1]

    def role_name(self, label: int) -> str:
        return NULL_NAME if label == 0 else self.roles[label - 1]

    def legal_mask(self) -> np.ndarray:
        """Boolean (C+1, A+1) table; row 0 (null type) and column 0 are all False."""
        mask = np.zeros((self.num_types + 1, self.num_roles + 1), dtype=bool)
        for t in self.event_types:
            for r in self.type_roles[t]:
                mask[self.type_label(t), self.role_label(r)] = True
        return mask

    def check_event(self, event: EventRecord) -> None:
        legal = self.type_roles.get(event.type)
        if legal is None:
            raise SchemaError(f"unknown event type {event.type!r}")
        for role, _ in event.arguments:
            if role not in legal:
                raise SchemaError(f"role {role!r} is not legal for event type {event.type!r}")

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "roles": list(self.roles),
            "event_types": [{"name": t, "roles": list(self.type_roles[t])} for t in self.event_types],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        try:
            types = tuple(e["name"] for e in obj["event_types"])
            type_roles = {e["name"]: tuple(e["roles"]) for e in obj["event_types"]}
            roles = tuple(obj["roles"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema object: missing {exc}") from None
        return cls(types, roles, type_roles)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
