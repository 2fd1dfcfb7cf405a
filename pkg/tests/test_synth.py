import json

import pytest

from genqa import synth
from genqa.kb import TripleStore, load_grounded, load_triples
from genqa.vocab import TokenSequence, tokenize


def small_spec(**overrides):
    base = dict(entities=40, noise_rate=0.0, seed=1)
    base.update(overrides)
    return synth.SyntheticSpec(**base)


def plain(text):
    toks = tokenize(text)
    return TokenSequence(ids=tuple(0 for _ in toks), surfaces=tuple(toks))


def test_counts_scale_with_entities_and_predicates():
    spec = synth.SyntheticSpec(
        entities=100, predicates=synth.default_predicates()[:3], noise_rate=0.0, seed=0
    )
    corpus = synth.generate(spec)
    assert len(corpus.triples) == 300
    assert len(corpus.qa_pairs) >= 300
    assert len(corpus.gold) == len(corpus.qa_pairs)


def test_objects_embedded_verbatim_and_spans_valid():
    corpus = synth.generate(small_spec())
    for row in corpus.gold:
        lo, hi = row["object_span"]
        tokens = row["answer"].split()
        assert " ".join(tokens[lo:hi]) == row["triple"]["object"]
        assert row["triple"]["object"] in row["answer"]


def test_zero_noise_grounding_recovers_every_gold_triple():
    corpus = synth.generate(small_spec(seed=3))
    store = TripleStore([(t["subject"], t["predicate"], t["object"]) for t in corpus.triples])
    key_to_id = {(t.subject, t.predicate, t.object): t.id for t in store.triples}
    hits = 0
    for row in corpus.gold:
        inst = store.ground(plain(row["question"]), plain(row["answer"]))
        gold_id = key_to_id[
            (row["triple"]["subject"], row["triple"]["predicate"], row["triple"]["object"])
        ]
        hits += inst is not None and inst.gold_triple_id == gold_id
    assert hits == len(corpus.gold)


def test_noisy_grounding_recovers_at_least_95_percent():
    corpus = synth.generate(small_spec(entities=45, noise_rate=0.1, seed=4))
    store = TripleStore([(t["subject"], t["predicate"], t["object"]) for t in corpus.triples])
    key_to_id = {(t.subject, t.predicate, t.object): t.id for t in store.triples}
    hits = 0
    for row in corpus.gold:
        inst = store.ground(plain(row["question"]), plain(row["answer"]))
        gold_id = key_to_id[
            (row["triple"]["subject"], row["triple"]["predicate"], row["triple"]["object"])
        ]
        hits += inst is not None and inst.gold_triple_id == gold_id
    assert hits / len(corpus.gold) >= 0.95


def test_same_seed_same_bytes(tmp_path):
    for sub in ("a", "b"):
        synth.write_corpus(synth.generate(small_spec(seed=9)), tmp_path / sub)
    for name in ("triples.jsonl", "qa.jsonl", "gold.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seeds_differ(tmp_path):
    a = synth.generate(small_spec(seed=1))
    b = synth.generate(small_spec(seed=2))
    assert a.triples != b.triples


def test_written_files_load_back(tmp_path):
    corpus = synth.generate(small_spec(seed=5))
    paths = synth.write_corpus(corpus, tmp_path)
    store = load_triples(paths["triples"])
    assert len(store) == len(corpus.triples)
    grounded = load_grounded(paths["gold"], store)
    assert len(grounded) == len(corpus.gold)


def test_spec_file_round_trip(tmp_path):
    spec = small_spec(entities=12, noise_rate=0.25, seed=7)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(synth.spec_to_dict(spec)))
    loaded = synth.load_spec(path)
    assert loaded == spec


def test_spec_validation():
    with pytest.raises(ValueError):
        synth.SyntheticSpec(entities=0)
    with pytest.raises(ValueError):
        synth.PredicateSchema(
            name="p", values=("v",), question_templates=("{s} ?",), answer_templates=("{o}", "x {o}")
        )
    with pytest.raises(ValueError):
        synth.PredicateSchema(
            name="p",
            values=("v",),
            question_templates=("a {s}", "b {s}", "c"),
            answer_templates=("{o}", "x {o}"),
        )


def test_chance_level():
    spec = small_spec()
    expected = sum(1.0 / len(p.values) for p in spec.predicates) / len(spec.predicates)
    assert spec.chance_level() == pytest.approx(expected)
    assert spec.chance_level() < 0.05
