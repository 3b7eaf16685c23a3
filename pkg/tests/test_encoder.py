import math

import numpy as np
import pytest

from proxyevent import diffcore as dc
from proxyevent.datakit import EventRecord
from proxyevent.diffcore import Tensor
from proxyevent.encoder import (
    EncodingError,
    TokenStates,
    Vocab,
    coevent_labels,
    decode_spans,
    encode,
    init_params,
    mention_reps,
    pair_coevent_loss,
    predicted_spans,
    tag_bio,
)

D_EMB, D_H = 5, 6


@pytest.fixture
def params():
    return init_params(10, D_EMB, D_H, np.random.default_rng(0))


def states_from(rows, lengths):
    rows = np.asarray(rows, dtype=float)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    avg = np.zeros((len(lengths), rows.shape[0]))
    for i in range(len(lengths)):
        avg[i, offsets[i]:offsets[i + 1]] = 1.0 / lengths[i]
    return TokenStates(Tensor(rows), Tensor(avg @ rows), offsets)


# ---------------------------------------------------------------- vocab


def test_vocab_reserved_and_unknown(tmp_path):
    v = Vocab(["a", "b", "a"])
    assert v.itos == ["<pad>", "<unk>", "a", "b"]
    assert v.ids(["b", "zzz"]).tolist() == [3, 1]
    v.save(tmp_path / "v.txt")
    w = Vocab.load(tmp_path / "v.txt")
    assert w.itos == v.itos and w.stoi == v.stoi


def test_vocab_load_rejects_missing_reserved(tmp_path):
    (tmp_path / "v.txt").write_text("a\nb\n")
    with pytest.raises(EncodingError):
        Vocab.load(tmp_path / "v.txt")


# ---------------------------------------------------------------- encode


def test_identical_tokens_give_identical_states(params):
    v = Vocab(["x"])
    ts = encode([["x", "x", "x", "x"]], v, params)
    assert np.allclose(ts.states.data, ts.states.data[0])
    assert np.allclose(ts.contexts.data[0], ts.states.data[0])


def test_zero_weights_give_zero_states(params):
    params["encoder.W"].data[:] = 0
    ts = encode([["a", "b"], ["c"]], Vocab(["a", "b", "c"]), params)
    assert np.all(ts.states.data == 0) and np.all(ts.contexts.data == 0)


def test_encode_shapes(params):
    ts = encode([["a", "b", "c"], ["c", "a", "a"]], Vocab(["a", "b", "c"]), params)
    assert ts.num_sentences == 2
    assert ts.sentence(0).shape == (3, D_H) and ts.sentence(1).shape == (3, D_H)
    assert ts.contexts.shape == (2, D_H)
    assert np.allclose(ts.contexts.data[1], ts.sentence(1).data.mean(axis=0))


def test_encode_formula(params):
    vocab = Vocab(["a", "b"])
    ts = encode([["a", "b"]], vocab, params)
    from scipy.special import erf
    emb = params["encoder.embed"].data[[2, 3]]
    x = np.concatenate([emb, np.repeat(emb.mean(axis=0, keepdims=True), 2, axis=0)], axis=1)
    z = x @ params["encoder.W"].data + params["encoder.b"].data
    ref = 0.5 * z * (1 + erf(z / math.sqrt(2)))
    assert np.allclose(ts.states.data, ref, atol=1e-12)


def test_empty_sentence_names_index(params):
    with pytest.raises(EncodingError, match="sentence 1"):
        encode([["a"], []], Vocab(["a"]), params)


# ---------------------------------------------------------------- BIO


def test_bio_uniform_loss_is_ln3(params):
    ts = states_from(np.random.default_rng(1).normal(size=(4, D_H)), [4])
    params["bio.W"].data[:] = 0
    _, loss = tag_bio(ts, params, [["O"] * 4])
    assert loss.item() == pytest.approx(math.log(3), abs=1e-12)


def test_bio_certain_loss_is_zero(params):
    ts = states_from(np.eye(D_H)[:3] * 100, [3])
    w = np.zeros((D_H, 3))
    w[0, 0] = w[1, 1] = w[2, 2] = 1.0  # token k -> label k
    params["bio.W"].data[:] = w
    probs, loss = tag_bio(ts, params, [["B", "I", "O"]])
    assert loss.item() < 1e-12
    assert np.allclose(probs.data.sum(axis=-1), 1.0)


def test_bio_length_mismatch(params):
    ts = states_from(np.zeros((3, D_H)), [3])
    with pytest.raises(EncodingError):
        tag_bio(ts, params, [["O", "O"]])


@pytest.mark.parametrize("labels,spans", [
    ("O O O", []),
    ("B I I", [(0, 3)]),
    ("I I O B", [(0, 2), (3, 4)]),
    ("B I O O B", [(0, 2), (4, 5)]),
    ("B B I", [(0, 1), (1, 3)]),
    ("", []),
])
def test_decode_spans(labels, spans):
    assert decode_spans(labels.split()) == spans


def test_predicted_spans_per_sentence():
    ts = states_from(np.zeros((5, 2)), [3, 2])
    lab = {"B": 0, "I": 1, "O": 2}
    seq = ["B", "I", "O", "I", "O"]
    probs = Tensor(np.eye(3)[[lab[x] for x in seq]])
    assert predicted_spans(probs, ts) == [(0, 0, 2), (1, 0, 1)]


# ---------------------------------------------------------------- mentions


def test_mention_means():
    rows = np.array([[1.0] * 3, [3.0] * 3, [7.0] * 3])
    ts = states_from(rows, [3])
    m = mention_reps(ts, [(0, 0, 2), (0, 2, 3)], [["p", "q", "r"]])
    assert np.allclose(m.vectors.data[0], 2.0)
    assert np.allclose(m.vectors.data[1], rows[2])


def test_identical_surfaces_share_entity():
    ts = states_from(np.arange(12.0).reshape(6, 2), [3, 3])
    sents = [["a", "b", "x"], ["y", "a", "b"]]
    m = mention_reps(ts, [(0, 0, 2), (1, 1, 3), (0, 2, 3)], sents)
    assert m.entity_keys == ["a b", "x"]
    assert m.entity_of.tolist() == [0, 0, 1]
    assert m.membership().tolist() == [[True, True, False], [False, False, True]]


def test_mention_reps_permutation_equivariant():
    rng = np.random.default_rng(3)
    ts = states_from(rng.normal(size=(8, 4)), [4, 4])
    sents = [list("abcd"), list("efgh")]
    spans = [(0, 0, 2), (1, 1, 4), (0, 3, 4), (1, 0, 1)]
    base = mention_reps(ts, spans, sents).vectors.data
    perm = [2, 0, 3, 1]
    moved = mention_reps(ts, [spans[i] for i in perm], sents).vectors.data
    assert np.array_equal(moved, base[perm])


def test_mention_out_of_bounds():
    ts = states_from(np.zeros((3, 2)), [3])
    with pytest.raises(EncodingError):
        mention_reps(ts, [(0, 2, 4)], [["a", "b", "c"]])
    with pytest.raises(EncodingError):
        mention_reps(ts, [(0, 1, 1)], [["a", "b", "c"]])


# ---------------------------------------------------------------- pair loss


def _three_mentions():
    ts = states_from(np.random.default_rng(5).normal(size=(3, D_H)), [3])
    return mention_reps(ts, [(0, 0, 1), (0, 1, 2), (0, 2, 3)], [["e1", "e2", "e3"]])


def test_coevent_labels_hand_case():
    m = _three_mentions()
    gold = [EventRecord("T", frozenset({("A", "e1"), ("B", "e2")})), EventRecord("T", frozenset({("A", "e3")}))]
    y = coevent_labels(m, gold)
    assert y[0, 1] == 1 and y[0, 2] == 0 and y[1, 2] == 0


def test_pair_loss_zero_mlp(params):
    params["epc.W2"].data[:] = 0
    params["epc.b2"].data[:] = 0
    loss, probs, labels = pair_coevent_loss(_three_mentions(), [], params)
    assert loss.item() == pytest.approx(3 * math.log(2), abs=1e-12)
    assert loss.item() == pytest.approx(2.079, abs=1e-3)
    assert np.allclose(probs.data, 0.5) and labels.tolist() == [0, 0, 0]


def test_pair_loss_single_mention(params):
    ts = states_from(np.ones((1, D_H)), [1])
    m = mention_reps(ts, [(0, 0, 1)], [["e"]])
    assert pair_coevent_loss(m, [], params)[0].item() == 0.0


def test_entity_loss_gradients(params):
    vocab = Vocab(list("abcde"))
    sents = [["a", "b", "c"], ["d", "a", "b"]]
    gold = [["B", "I", "O"], ["B", "B", "I"]]
    spans = [(0, 0, 2), (1, 0, 1), (1, 1, 3)]
    events = [EventRecord("T", frozenset({("A", "a b"), ("B", "d")}))]
    subset = {k: params[k] for k in ("encoder.embed", "encoder.W", "bio.W", "epc.W1", "epc.b2")}

    def loss():
        ts = encode(sents, vocab, params)
        _, l_er = tag_bio(ts, params, gold)
        l_epc, _, _ = pair_coevent_loss(mention_reps(ts, spans, sents), events, params)
        return dc.add(l_er, l_epc)

    assert loss().item() >= 0
    for name, err in dc.check_gradients(loss, subset).items():
        assert err < 1e-4, name
