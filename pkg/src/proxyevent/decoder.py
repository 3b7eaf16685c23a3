"""Per-proxy event decoding: type, proxy-queried entity pooling, roles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .datakit.schema import EventRecord, Schema
from .diffcore import Tensor

MASKED = -1e30


def init_params(d_h: int, num_types: int, num_roles: int, heads: int,
                rng: np.random.Generator) -> dict[str, Tensor]:
    if d_h % heads:
        raise ValueError(f"d_h={d_h} is not divisible by {heads} heads")

    def w(*shape):
        return Tensor(rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape), requires_grad=True)

    def zeros(k):
        return Tensor(np.zeros(k), requires_grad=True)

    return {
        "type.W1": w(d_h, d_h), "type.b1": zeros(d_h),
        "type.W2": w(d_h, num_types + 1), "type.b2": zeros(num_types + 1),
        "mha.Wq": w(d_h, d_h), "mha.Wk": w(d_h, d_h), "mha.Wv": w(d_h, d_h), "mha.Wo": w(d_h, d_h),
        "arg.W1": w(2 * d_h, d_h), "arg.b1": zeros(d_h),
        "arg.W2": w(d_h, num_roles + 1), "arg.b2": zeros(num_roles + 1),
    }


def _mlp(x: Tensor, params, prefix: str) -> Tensor:
    hidden = dc.gelu(dc.add(dc.matmul(x, params[f"{prefix}.W1"]), params[f"{prefix}.b1"]))
    return dc.add(dc.matmul(hidden, params[f"{prefix}.W2"]), params[f"{prefix}.b2"])


def classify_event_type(h_proxy: Tensor, params) -> Tensor:
    """Distribution over null + event types; works on (d,) or (n, d)."""
    return dc.softmax(_mlp(h_proxy, params, "type"))


def aggregate_entities(h_proxy: Tensor, mention_vectors: Tensor, membership: np.ndarray,
                       params, heads: int) -> Tensor:
    """Multi-head attention pooling of each entity's mentions, one query per proxy.

    ``membership`` is a boolean (E, M) table. Returns (n, E, d).
    """
    n, d = h_proxy.shape
    num_m = mention_vectors.shape[0]
    num_e = membership.shape[0]
    if num_e and not membership.any(axis=1).all():
        raise RuntimeError("every entity needs at least one mention")
    dk = d // heads
    q = dc.transpose(dc.reshape(dc.matmul(h_proxy, params["mha.Wq"]), (n, heads, dk)), (1, 0, 2))
    k = dc.transpose(dc.reshape(dc.matmul(mention_vectors, params["mha.Wk"]), (num_m, heads, dk)), (1, 2, 0))
    v = dc.transpose(dc.reshape(dc.matmul(mention_vectors, params["mha.Wv"]), (num_m, heads, dk)), (1, 0, 2))
    scores = dc.mul(dc.matmul(q, k), 1.0 / np.sqrt(dk))  # (H, n, M)
    scores = dc.reshape(scores, (heads, n, 1, num_m))
    bias = np.where(membership, 0.0, MASKED)  # (E, M)
    attn = dc.softmax(dc.add(scores, bias))  # (H, n, E, M)
    pooled = dc.matmul(attn, dc.reshape(v, (heads, 1, num_m, dk)))  # (H, n, E, dk)
    pooled = dc.reshape(dc.transpose(pooled, (1, 2, 0, 3)), (n, num_e, d))
    return dc.matmul(pooled, params["mha.Wo"])


def aggregate_entity(h_proxy: Tensor, mention_vectors: Tensor, params, heads: int) -> Tensor:
    """Single proxy, single entity form; returns (d,)."""
    if mention_vectors.shape[0] == 0:
        raise RuntimeError("entity has no mentions")
    q = dc.reshape(h_proxy, (1, -1)) if h_proxy.ndim == 1 else h_proxy
    out = aggregate_entities(q, mention_vectors, np.ones((1, mention_vectors.shape[0]), dtype=bool), params, heads)
    return dc.reshape(out, (out.shape[-1],))


def classify_argument(h_proxy: Tensor, h_entity: Tensor, params) -> Tensor:
    """Role distribution from ``[h_proxy ; h_entity]``.

    Shapes: (d,) with (d,), or (n, d) with (n, E, d) giving (n, E, A+1).
    """
    if h_entity.ndim == 3:
        n, num_e, d = h_entity.shape
        h_proxy = dc.broadcast_to(dc.reshape(h_proxy, (n, 1, d)), (n, num_e, d))
    return dc.softmax(_mlp(dc.concat([h_proxy, h_entity], axis=-1), params, "arg"))


@dataclass
class ProxyPrediction:
    proxy_id: int
    type_probs: np.ndarray  # (C+1,)
    arg_probs: np.ndarray  # (E, A+1)


@dataclass
class ProxyPredictions:
    type_probs: Tensor  # (n, C+1)
    arg_probs: Tensor  # (n, E, A+1)
    entity_keys: list

    @property
    def n(self) -> int:
        return self.type_probs.shape[0]

    def proxy(self, i: int) -> ProxyPrediction:
        return ProxyPrediction(i, self.type_probs.data[i], self.arg_probs.data[i])


def decode_events(type_probs, arg_probs, entity_keys, schema: Schema) -> list[EventRecord]:
    """Argmax decoding with schema filtering and one entity per role.

    Order per proxy: drop null type; drop null-role entities; drop roles
    illegal for the type; then for each role keep the entity with the most
    probability on that role. All ties go to the lowest index.
    """
    tp = np.asarray(type_probs.data if isinstance(type_probs, Tensor) else type_probs)
    ap = np.asarray(arg_probs.data if isinstance(arg_probs, Tensor) else arg_probs)
    legal = schema.legal_mask()
    events = []
    for i in range(tp.shape[0]):
        c = int(np.argmax(tp[i]))
        if c == 0:
            continue
        best: dict[int, tuple[float, int]] = {}
        for k in range(len(entity_keys)):
            a = int(np.argmax(ap[i, k]))
            if a == 0 or not legal[c, a]:
                continue
            p = float(ap[i, k, a])
            if a not in best or p > best[a][0]:
                best[a] = (p, k)
        args = frozenset((schema.role_name(a), entity_keys[k]) for a, (_, k) in best.items())
        conf = {"type": float(tp[i, c]), "roles": {schema.role_name(a): p for a, (p, _) in best.items()}}
        events.append(EventRecord(schema.type_name(c), args, confidence=conf))
    return events
