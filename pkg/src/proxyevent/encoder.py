"""Token encoder, BIO tagger, mention pooling and the entity-pair loss."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

PAD, UNK = "<pad>", "<unk>"
BIO = ("B", "I", "O")
_BIO_INDEX = {lab: i for i, lab in enumerate(BIO)}


class EncodingError(ValueError):
    pass


class Vocab:
    """Token <-> id map. Ids 0 and 1 are padding and unknown."""

    def __init__(self, tokens=()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: 0, UNK: 1}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def ids(self, tokens) -> np.ndarray:
        return np.array([self.stoi.get(t, 1) for t in tokens], dtype=np.int64)

    @classmethod
    def from_documents(cls, docs) -> "Vocab":
        vocab = cls()
        for doc in docs:
            for sent in doc.sentences:
                for tok in sent:
                    vocab.add(tok)
        return vocab

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:2] != [PAD, UNK]:
            raise EncodingError(f"{path}: first two lines must be {PAD!r} and {UNK!r}")
        return cls(lines[2:])


def init_params(vocab_size: int, d_emb: int, d_h: int, rng: np.random.Generator) -> dict[str, Tensor]:
    def w(*shape, fan_in):
        return Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape), requires_grad=True)

    return {
        "encoder.embed": Tensor(rng.normal(0.0, 1.0, size=(vocab_size, d_emb)), requires_grad=True),
        "encoder.W": w(2 * d_emb, d_h, fan_in=2 * d_emb),
        "encoder.b": Tensor(np.zeros(d_h), requires_grad=True),
        "bio.W": w(d_h, 3, fan_in=d_h),
        "bio.b": Tensor(np.zeros(3), requires_grad=True),
        "epc.W1": w(2 * d_h, d_h, fan_in=2 * d_h),
        "epc.b1": Tensor(np.zeros(d_h), requires_grad=True),
        "epc.W2": w(d_h, 1, fan_in=d_h),
        "epc.b2": Tensor(np.zeros(1), requires_grad=True),
    }


@dataclass
class TokenStates:
    states: Tensor  # (T, d_h), all sentences stacked
    contexts: Tensor  # (S, d_h)
    offsets: np.ndarray  # sentence i owns rows offsets[i]:offsets[i+1]

    @property
    def num_sentences(self) -> int:
        return len(self.offsets) - 1

    def sentence(self, i: int) -> Tensor:
        return dc.take(self.states, slice(int(self.offsets[i]), int(self.offsets[i + 1])))

    def row(self, sent: int, tok: int) -> int:
        return int(self.offsets[sent]) + tok


def _segment_mean_matrix(lengths) -> np.ndarray:
    total = int(sum(lengths))
    m = np.zeros((len(lengths), total))
    start = 0
    for i, n in enumerate(lengths):
        m[i, start:start + n] = 1.0 / n
        start += n
    return m


def encode(sentences: list[list[str]], vocab: Vocab, params: dict[str, Tensor]) -> TokenStates:
    """``GELU(W [embed(tok); sentence-mean embed] + b)`` per token; contexts are sentence means."""
    for i, s in enumerate(sentences):
        if not s:
            raise EncodingError(f"sentence {i} is empty")
    lengths = [len(s) for s in sentences]
    ids = vocab.ids([t for s in sentences for t in s])
    sent_of = np.repeat(np.arange(len(sentences)), lengths)
    avg = _segment_mean_matrix(lengths)
    emb = dc.take(params["encoder.embed"], ids)
    sent_mean = dc.matmul(avg, emb)
    x = dc.concat([emb, dc.take(sent_mean, sent_of)], axis=-1)
    states = dc.gelu(dc.add(dc.matmul(x, params["encoder.W"]), params["encoder.b"]))
    contexts = dc.matmul(avg, states)
    return TokenStates(states, contexts, np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64))


def tag_bio(token_states: TokenStates, params: dict[str, Tensor], gold: list[list[str]] | None = None):
    """Per-token {B, I, O} distributions and, given gold labels, the mean token cross-entropy."""
    logits = dc.add(dc.matmul(token_states.states, params["bio.W"]), params["bio.b"])
    probs = dc.softmax(logits)
    if gold is None:
        return probs, None
    flat = [lab for sent in gold for lab in sent]
    if len(flat) != probs.shape[0] or len(gold) != token_states.num_sentences:
        raise EncodingError(f"gold BIO has {len(flat)} labels for {probs.shape[0]} tokens")
    target = np.array([_BIO_INDEX[lab] for lab in flat], dtype=np.int64)
    picked = dc.take(probs, (np.arange(len(target)), target))
    return probs, dc.mean(dc.neg_log(picked))


def decode_spans(labels) -> list[tuple[int, int]]:
    """Maximal B I* runs as half-open spans; an orphan I opens a new span."""
    spans = []
    start = None
    for i, lab in enumerate(labels):
        if lab == "B":
            if start is not None:
                spans.append((start, i))
            start = i
        elif lab == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(labels)))
    return spans


def predicted_spans(probs: Tensor, token_states: TokenStates) -> list[tuple[int, int, int]]:
    best = np.argmax(probs.data, axis=-1)
    out = []
    for s in range(token_states.num_sentences):
        lo, hi = token_states.offsets[s], token_states.offsets[s + 1]
        labels = [BIO[k] for k in best[lo:hi]]
        out.extend((s, a, b) for a, b in decode_spans(labels))
    return out


@dataclass
class MentionRep:
    mention_id: int
    entity_id: int
    span: tuple[int, int, int]
    vector: np.ndarray


@dataclass
class Mentions:
    """Mention vectors plus their grouping into unique entities."""

    vectors: Tensor  # (M, d_h)
    spans: list[tuple[int, int, int]]
    entity_of: np.ndarray  # (M,) index into ``entity_keys``
    entity_keys: list[str]  # surface strings, first-appearance order

    def __len__(self) -> int:
        return len(self.spans)

    @property
    def num_entities(self) -> int:
        return len(self.entity_keys)

    def membership(self) -> np.ndarray:
        """Boolean (E, M) table: mention m belongs to entity e."""
        table = np.zeros((self.num_entities, len(self.spans)), dtype=bool)
        table[self.entity_of, np.arange(len(self.spans))] = True
        return table

    def reps(self) -> list[MentionRep]:
        return [
            MentionRep(i, int(self.entity_of[i]), self.spans[i], self.vectors.data[i])
            for i in range(len(self.spans))
        ]


def mention_reps(token_states: TokenStates, spans, sentences: list[list[str]]) -> Mentions:
    """Mean-pool token states over each span; identical token sequences share an entity id."""
    spans = [tuple(int(x) for x in sp) for sp in spans]
    total = token_states.states.shape[0]
    pool = np.zeros((len(spans), total))
    keys: list[str] = []
    index: dict[str, int] = {}
    entity_of = np.zeros(len(spans), dtype=np.int64)
    for m, (s, start, end) in enumerate(spans):
        if not (0 <= s < token_states.num_sentences and 0 <= start < end <= len(sentences[s])):
            raise EncodingError(f"span {(s, start, end)} is out of bounds")
        lo = token_states.row(s, start)
        pool[m, lo:lo + end - start] = 1.0 / (end - start)
        surface = " ".join(sentences[s][start:end])
        if surface not in index:
            index[surface] = len(keys)
            keys.append(surface)
        entity_of[m] = index[surface]
    if spans:
        vectors = dc.matmul(pool, token_states.states)
    else:
        vectors = Tensor(np.zeros((0, token_states.states.shape[1])))
    return Mentions(vectors, spans, entity_of, keys)


def coevent_labels(mentions: Mentions, gold_events) -> np.ndarray:
    """y[i, j] = 1 when the entities of mentions i and j appear together in a gold event.

    ``gold_events`` holds EventRecords whose entity keys are surfaces.
    """
    member = [set(x for _, x in ev.arguments) for ev in gold_events]
    keys = [mentions.entity_keys[e] for e in mentions.entity_of]
    m = len(keys)
    y = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            y[i, j] = float(any(keys[i] in s and keys[j] in s for s in member))
    return y


def pair_coevent_loss(mentions: Mentions, gold_events, params: dict[str, Tensor]):
    """Summed BCE over unordered mention pairs (i < j); returns (loss, probs, labels)."""
    m = len(mentions)
    if m < 2:
        return Tensor(0.0), Tensor(np.zeros(0)), np.zeros(0)
    ii, jj = np.triu_indices(m, k=1)
    h = mentions.vectors
    x = dc.concat([dc.take(h, ii), dc.take(h, jj)], axis=-1)
    hidden = dc.gelu(dc.add(dc.matmul(x, params["epc.W1"]), params["epc.b1"]))
    logit = dc.add(dc.matmul(hidden, params["epc.W2"]), params["epc.b2"])
    probs = dc.sigmoid(dc.reshape(logit, (len(ii),)))
    labels = coevent_labels(mentions, gold_events)[ii, jj]
    return dc.tsum(dc.binary_cross_entropy(probs, labels)), probs, labels
