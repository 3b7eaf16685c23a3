import json
import random

import numpy as np
import pytest

from proxyevent.datakit import (
    CorpusError,
    Document,
    Entity,
    EventRecord,
    GenConfig,
    GenConfigError,
    Schema,
    SchemaError,
    build_schema,
    corpus_stats,
    generate,
    read_jsonl,
    score,
    write_jsonl,
)
from scoring_fixtures import FIXTURES, ev


def small(**kw):
    return GenConfig(**{"num_docs": 40, **kw})


# ---------------------------------------------------------------- schema


def test_schema_labels_and_mask():
    s = Schema(("A", "B"), ("r1", "r2", "r3"), {"A": ("r1",), "B": ("r2", "r3")})
    assert s.type_label("A") == 1 and s.role_label("r3") == 3
    assert s.type_name(0) == "<null>" and s.role_name(2) == "r2"
    m = s.legal_mask()
    assert m.shape == (3, 4)
    assert not m[0].any() and not m[:, 0].any()
    assert m[1].tolist() == [False, True, False, False]
    assert Schema.from_json(s.to_json()) == s
    with pytest.raises(SchemaError):
        s.type_label("C")


def test_schema_rejects_unknown_role():
    with pytest.raises(SchemaError):
        Schema(("A",), ("r1",), {"A": ("r9",)})


def test_event_record_role_unique():
    with pytest.raises(SchemaError):
        EventRecord("T", frozenset({("R", 1), ("R", 2)}))


# ---------------------------------------------------------------- JSONL


def test_jsonl_round_trip(tmp_path):
    docs = generate(small(num_docs=25, seed=3))
    path = tmp_path / "c.jsonl"
    write_jsonl(docs, path)
    again = read_jsonl(path, build_schema(small(seed=3)))
    assert again == docs
    write_jsonl(again, tmp_path / "d.jsonl")
    assert (tmp_path / "d.jsonl").read_bytes() == path.read_bytes()


def test_single_doc_round_trip(tmp_path):
    doc = Document(4, [["x", "A", "b"], ["A", "b"]], [Entity(0, "A b", ((0, 1, 3), (1, 0, 2)))],
                   [EventRecord.from_dict("T0", {"R0": 0})])
    write_jsonl([doc], tmp_path / "one.jsonl")
    assert read_jsonl(tmp_path / "one.jsonl") == [doc]


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert read_jsonl(tmp_path / "e.jsonl") == []


def test_missing_events_field(tmp_path):
    obj = {"format_version": 1, "id": 1, "sentences": [["a"]], "entities": []}
    good = generate(small(num_docs=1))[0].to_json()
    (tmp_path / "bad.jsonl").write_text(json.dumps(good) + "\n" + json.dumps(obj) + "\n")
    with pytest.raises(CorpusError, match=r"bad\.jsonl:2: .*events"):
        read_jsonl(tmp_path / "bad.jsonl")


def test_nested_field_path(tmp_path):
    obj = generate(small(num_docs=1))[0].to_json()
    del obj["entities"][0]["surface"]
    (tmp_path / "bad.jsonl").write_text(json.dumps(obj) + "\n")
    with pytest.raises(CorpusError, match=r":1: .*entities\[0\]\.surface"):
        read_jsonl(tmp_path / "bad.jsonl")


def test_validation_catches_bad_span():
    doc = Document(0, [["a", "b"]], [Entity(0, "a b", ((0, 1, 3),))], [])
    with pytest.raises(CorpusError, match="out of bounds"):
        doc.validate()
    doc = Document(0, [["a", "b"]], [Entity(0, "a", ((0, 0, 1),))], [EventRecord.from_dict("T", {"R": 5})])
    with pytest.raises(CorpusError, match="unknown entity"):
        doc.validate()


# ---------------------------------------------------------------- generator


def test_generate_deterministic():
    a, b = generate(small(seed=9)), generate(small(seed=9))
    assert [d.to_json() for d in a] == [d.to_json() for d in b]
    assert [d.to_json() for d in generate(small(seed=10))] != [d.to_json() for d in a]


def test_generated_documents_consistent():
    cfg = small(num_docs=100)
    schema = build_schema(cfg)
    for doc in generate(cfg):
        doc.validate(schema)
        assert cfg.min_events <= len(doc.events) <= cfg.max_events
        assert all(len(s) >= cfg.tokens_per_sentence for s in doc.sentences)
        assert len(doc.sentences) == cfg.sentences_per_doc


def test_no_sharing():
    for doc in generate(small(num_docs=100, share_prob=0.0)):
        seen = [eid for e in doc.events for _, eid in e.arguments]
        assert len(seen) == len(set(seen))


def test_full_sharing():
    docs = generate(small(num_docs=60, share_prob=1.0, min_events=2, max_events=2, event_count_weights=()))
    for doc in docs:
        a, b = ({eid for _, eid in e.arguments} for e in doc.events)
        assert a & b


def test_vocab_too_small():
    with pytest.raises(GenConfigError, match="vocab_size"):
        generate(small(vocab_size=20))


def test_corpus_stats_recount():
    docs = generate(small(num_docs=80))
    st = corpus_stats(docs)
    assert st["documents"] == 80
    assert st["multi_event_docs"] == sum(len(d.events) > 1 for d in docs)
    assert st["single_event_docs"] + st["multi_event_docs"] == 80


# ---------------------------------------------------------------- scoring


@pytest.mark.parametrize("fx", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_metric_fixture(fx):
    _, pred, gold, counts, prf = fx
    r = score(pred, gold)
    assert (r.overall.tp, r.overall.fp, r.overall.fn) == counts
    assert (r.precision, r.recall, r.f1) == tuple(float(x) for x in prf)


def test_unknown_type_rejected():
    schema = Schema(("T1",), ("R1",), {"T1": ("R1",)})
    with pytest.raises(SchemaError):
        score([[ev("T9", R1="a")]], [[ev("T1", R1="a")]], schema)


def test_single_multi_split():
    pred = [[ev("T1", R1="a")], [ev("T1", R1="a"), ev("T1", R1="q")]]
    gold = [[ev("T1", R1="a")], [ev("T1", R1="a"), ev("T1", R1="b")]]
    r = score(pred, gold)
    assert r.single.f1 == 1.0
    assert (r.multi.tp, r.multi.fp, r.multi.fn) == (1, 1, 1)
    js = r.to_json()
    assert js["format_version"] == 1 and js["f1_single"] == 1.0 and js["f1_multi"] == 0.5


def test_score_invariants():
    docs = generate(small(num_docs=60, seed=4))
    gold = [d.events_by_surface() for d in docs]
    assert score(gold, gold).f1 == 1.0
    rng = random.Random(0)
    rs = np.random.default_rng(0)
    for _ in range(30):
        pred = []
        for g in gold:
            evs = [EventRecord(e.type, frozenset(a for a in e.arguments if rs.random() < 0.7)) for e in g]
            if rs.random() < 0.3:
                evs.append(ev("T1", R0="noise"))
            pred.append(evs)
        r = score(pred, gold)
        assert r.overall.tp + r.overall.fn == sum(len(e.arguments) for g in gold for e in g)
        assert r.overall.tp + r.overall.fp == sum(len(e.arguments) for p in pred for e in p)
        shuffled = [rng.sample(p, len(p)) for p in pred]
        gshuf = [rng.sample(g, len(g)) for g in gold]
        r2 = score(shuffled, gshuf)
        assert (r2.overall.tp, r2.overall.fp, r2.overall.fn) == (r.overall.tp, r.overall.fp, r.overall.fn)
        total = sum(c.tp for c in r.per_type.values()), sum(c.fp for c in r.per_type.values())
        assert total == (r.overall.tp, r.overall.fp)


def test_generate_write_read_score_identity(tmp_path):
    cfg = small(num_docs=30)
    docs = generate(cfg)
    write_jsonl(docs, tmp_path / "c.jsonl")
    back = read_jsonl(tmp_path / "c.jsonl", build_schema(cfg))
    g = [d.events_by_surface() for d in back]
    assert score(g, [d.events_by_surface() for d in docs], build_schema(cfg)).f1 == 1.0
