"""Proxy / entity / context graph and the one-layer FiLM update."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .diffcore.tensor import DimensionError


class ConfigurationError(ValueError):
    pass


class EdgeType(enum.Enum):
    PROXY_PROXY = "pp"
    ENTITY_PROXY = "ep"
    CONTEXT_PROXY = "cp"


_SOURCE = {EdgeType.PROXY_PROXY: "proxy", EdgeType.ENTITY_PROXY: "entity", EdgeType.CONTEXT_PROXY: "context"}


def init_params(n: int, d_h: int, rng: np.random.Generator, proxy_std: float = 0.02) -> dict[str, Tensor]:
    params = {"proxy.embeddings": Tensor(rng.normal(0.0, proxy_std, size=(n, d_h)), requires_grad=True)}
    scale = 1.0 / np.sqrt(d_h)
    for et in EdgeType:
        for part in ("W", "W_gamma", "W_beta"):
            params[f"film.{et.value}.{part}"] = Tensor(rng.normal(0.0, scale, size=(d_h, d_h)), requires_grad=True)
    return params


def proxy_vectors(params: dict[str, Tensor], n: int, shared: bool = False) -> Tensor:
    """Initial proxy states; ``shared`` makes every proxy read row 0."""
    bank = params["proxy.embeddings"]
    if n < 1:
        raise ConfigurationError("the proxy count must be at least 1")
    if bank.shape[0] < n:
        raise ConfigurationError(f"proxy bank holds {bank.shape[0]} rows, {n} requested")
    rows = np.zeros(n, dtype=np.int64) if shared else np.arange(n)
    return dc.take(bank, rows)


@dataclass
class HeteroGraph:
    """Nodes grouped by kind; every edge ends at a proxy.

    ``edges[t] = (src, dst)`` index arrays into the source kind's rows and
    the proxy rows respectively.
    """

    proxy: Tensor
    entity: Tensor
    context: Tensor
    edges: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.proxy.shape[0]

    def source(self, et: EdgeType) -> Tensor:
        return getattr(self, _SOURCE[et])

    def edge_count(self, et: EdgeType) -> int:
        return len(self.edges[et][0])


def _complete(num_src: int, num_dst: int):
    src, dst = np.meshgrid(np.arange(num_src), np.arange(num_dst), indexing="ij")
    return src.reshape(-1), dst.reshape(-1)


def build_graph(proxies: Tensor, entities: Tensor, contexts: Tensor) -> HeteroGraph:
    n = proxies.shape[0]
    if n == 0:
        raise ConfigurationError("graph needs at least one proxy node")
    d = proxies.shape[1]
    for kind, t in (("entity", entities), ("context", contexts)):
        if t.shape[0] and t.shape[1] != d:
            raise DimensionError(f"{kind} vectors have width {t.shape[1]}, proxies {d}")
    return HeteroGraph(
        proxy=proxies,
        entity=entities,
        context=contexts,
        edges={
            EdgeType.PROXY_PROXY: _complete(n, n),
            EdgeType.ENTITY_PROXY: _complete(entities.shape[0], n),
            EdgeType.CONTEXT_PROXY: _complete(contexts.shape[0], n),
        },
    )


def film_layer(graph: HeteroGraph, params: dict[str, Tensor], modulate: bool = True) -> Tensor:
    """Updated proxy vectors, shape (n, d_h).

    Each edge ``u -> v`` of type t contributes ``gamma_t(h_v) * (W_t h_u) + beta_t(h_v)``
    where the modulations come from the target's current vector. With
    ``modulate=False`` gamma is 1 and beta is 0 for every node.
    """
    n = graph.n
    d = graph.proxy.shape[1]
    total = None
    for et in EdgeType:
        src, dst = graph.edges[et]
        if len(src) == 0:
            continue
        w = params[f"film.{et.value}.W"]
        if w.shape != (d, d):
            raise DimensionError(f"film.{et.value}.W has shape {w.shape}, expected {(d, d)}")
        messages = dc.matmul(dc.take(graph.source(et), src), w)
        if modulate:
            gamma = dc.matmul(graph.proxy, params[f"film.{et.value}.W_gamma"])
            beta = dc.matmul(graph.proxy, params[f"film.{et.value}.W_beta"])
            messages = dc.add(dc.mul(dc.take(gamma, dst), messages), dc.take(beta, dst))
        incidence = np.zeros((n, len(dst)))
        incidence[dst, np.arange(len(dst))] = 1.0
        agg = dc.matmul(incidence, messages)
        total = agg if total is None else dc.add(total, agg)
    return dc.gelu(total)
