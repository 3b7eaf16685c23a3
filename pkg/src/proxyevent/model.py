"""The full extraction model: encoder -> proxy graph -> decoder -> set loss."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import decoder, diffcore as dc, encoder, matching, proxygraph
from .datakit import Document, EventRecord, Schema
from .diffcore import Tensor
from .encoder import Mentions, Vocab

ABLATIONS = ("full", "no_hypernetwork", "no_proxy", "no_hdm")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    d_emb: int = 32
    d_h: int = 32
    n_proxies: int = 16
    heads: int = 4
    # the reference setup used 1e-5 (pretrained) / 1e-4 (fresh); nothing is pretrained here
    lr_encoder: float = 1e-3
    lr_rest: float = 1e-3
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    ablation: str = "full"
    proxy_init_std: float = 0.02

    def validate(self) -> None:
        for f in ("d_emb", "d_h", "n_proxies", "heads", "batch_size", "max_epochs"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be positive, got {getattr(self, f)}")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.d_h % self.heads:
            raise ConfigError(f"d_h={self.d_h} must be divisible by heads={self.heads}")
        if self.lr_encoder <= 0 or self.lr_rest <= 0:
            raise ConfigError("learning rates must be positive")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ForwardResult:
    predictions: decoder.ProxyPredictions
    mentions: Mentions
    proxy_states: Tensor
    l_er: Tensor
    l_epc: Tensor

    @property
    def l_e(self) -> Tensor:
        return dc.add(self.l_er, self.l_epc)


@dataclass
class LossParts:
    total: Tensor
    d_hat: float
    avg_hausdorff: float
    l_er: float
    l_epc: float
    assignment: matching.Assignment


def gold_mention_spans(doc: Document) -> list[tuple[int, int, int]]:
    return sorted(m for e in doc.entities for m in e.mentions)


def encode_gold(doc: Document, schema: Schema, entity_keys: list[str]):
    """(types, arg_labels) of the document's gold events against ``entity_keys``."""
    index = {k: i for i, k in enumerate(entity_keys)}
    events = doc.events_by_surface()
    types = np.array([schema.type_label(ev.type) for ev in events], dtype=np.int64)
    labels = np.zeros((len(events), len(entity_keys)), dtype=np.int64)
    for j, ev in enumerate(events):
        for role, key in ev.arguments:
            if key in index:
                labels[j, index[key]] = schema.role_label(role)
    return types, labels


class Model:
    def __init__(self, config: TrainConfig, vocab: Vocab, schema: Schema, params: dict[str, Tensor] | None = None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.schema = schema
        if params is None:
            rng = np.random.default_rng([config.seed, 0])
            params = {}
            params.update(encoder.init_params(len(vocab), config.d_emb, config.d_h, rng))
            params.update(proxygraph.init_params(config.n_proxies, config.d_h, rng, config.proxy_init_std))
            params.update(decoder.init_params(config.d_h, schema.num_types, schema.num_roles, config.heads, rng))
        self.params = params

    @property
    def n(self) -> int:
        return self.config.n_proxies

    def lr_overrides(self) -> dict[str, float]:
        return {
            name: (self.config.lr_encoder if name.startswith("encoder.") else self.config.lr_rest)
            for name in self.params
        }

    def forward(self, doc: Document, training: bool = True) -> ForwardResult:
        p = self.params
        cfg = self.config
        states = encoder.encode(doc.sentences, self.vocab, p)
        gold_bio = doc.bio_labels() if training else None
        bio_probs, l_er = encoder.tag_bio(states, p, gold_bio)
        spans = gold_mention_spans(doc) if training else encoder.predicted_spans(bio_probs, states)
        mentions = encoder.mention_reps(states, spans, doc.sentences)
        if training:
            l_epc, _, _ = encoder.pair_coevent_loss(mentions, doc.events_by_surface(), p)
        else:
            l_epc = Tensor(0.0)
        if l_er is None:
            l_er = Tensor(0.0)

        z0 = proxygraph.proxy_vectors(p, cfg.n_proxies, shared=cfg.ablation == "no_proxy")
        graph = proxygraph.build_graph(z0, mentions.vectors, states.contexts)
        hz = proxygraph.film_layer(graph, p, modulate=cfg.ablation != "no_hypernetwork")

        type_probs = decoder.classify_event_type(hz, p)
        if mentions.num_entities:
            pooled = decoder.aggregate_entities(hz, mentions.vectors, mentions.membership(), p, cfg.heads)
            arg_probs = decoder.classify_argument(hz, pooled, p)
        else:
            arg_probs = Tensor(np.zeros((cfg.n_proxies, 0, self.schema.num_roles + 1)))
        preds = decoder.ProxyPredictions(type_probs, arg_probs, list(mentions.entity_keys))
        return ForwardResult(preds, mentions, hz, l_er, l_epc)

    def loss(self, doc: Document, rng: np.random.Generator | None = None) -> LossParts:
        """Set loss plus entity losses for one training document.

        ``rng`` is only consulted by the ``no_hdm`` ablation, which swaps the
        optimal assignment for a random permutation.
        """
        out = self.forward(doc, training=True)
        types, labels = encode_gold(doc, self.schema, out.predictions.entity_keys)
        gold = matching.pad_gold(types, labels, self.n)
        assignment = None
        if self.config.ablation == "no_hdm":
            rng = rng if rng is not None else np.random.default_rng()
            perm = tuple(int(x) for x in rng.permutation(self.n))
            assignment = matching.Assignment(perm, float("nan"))
        d_hat, cost, assignment = matching.constrained_hausdorff(
            out.predictions.type_probs, out.predictions.arg_probs, gold, assignment
        )
        total = matching.total_loss(d_hat, out.l_e)
        return LossParts(total, d_hat.item(), matching.avg_hausdorff(cost), out.l_er.item(), out.l_epc.item(), assignment)

    def predict(self, doc: Document) -> list[EventRecord]:
        with dc.no_grad():
            out = self.forward(doc, training=False)
        pr = out.predictions
        return decoder.decode_events(pr.type_probs, pr.arg_probs, pr.entity_keys, self.schema)

    def embeddings(self, doc: Document):
        """Entity mention vectors (gold spans) and updated proxy vectors."""
        with dc.no_grad():
            out = self.forward(doc, training=True)
        return out.mentions, out.proxy_states.data.copy()

    # ------------------------------------------------------------ persistence

    def meta(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "vocab": self.vocab.itos,
            "schema": self.schema.to_json(),
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def save(self, path, extra_arrays: dict | None = None, extra_meta: dict | None = None) -> None:
        arrays = dict(self.arrays())
        arrays.update(extra_arrays or {})
        meta = self.meta()
        meta.update(extra_meta or {})
        dc.save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> tuple["Model", dict, dict]:
        arrays, meta = dc.load_checkpoint(path)
        config = TrainConfig.from_dict(meta["config"])
        vocab = Vocab(meta["vocab"][2:])
        schema = Schema.from_json(meta["schema"])
        model = cls(config, vocab, schema)
        for name, t in model.params.items():
            if name not in arrays:
                raise dc.CheckpointError(f"{path}: missing parameter {name!r}")
            if arrays[name].shape != t.shape:
                raise dc.CheckpointError(f"{path}: parameter {name!r} has shape {arrays[name].shape}, expected {t.shape}")
            t.data = arrays[name].copy()
        rest = {k: v for k, v in arrays.items() if k not in model.params}
        return model, rest, meta
