"""Shared builders for a tiny deterministic QA world used across tests."""

from __future__ import annotations

from genqa.kb import GroundedInstance, TripleStore
from genqa.model import Model, ModelConfig
from genqa.vocab import TokenSequence, tokenize

ENTITIES = ["mira bel", "kato ven", "odo rell", "suli mar", "tano vex", "pia norr"]
HEIGHTS = ["1.71m", "1.84m", "1.92m", "2.03m"]
TEAMS = ["fc luna", "fc orbit", "fc delta"]

QUESTION_TEMPLATES = {
    "height": ["how tall is {s} ?", "what is the height of {s} ?"],
    "team": ["which team does {s} play for ?", "who does {s} play for ?"],
}
ANSWER_TEMPLATES = {
    "height": ["he is {o} tall .", "{s} stands {o} tall ."],
    "team": ["{s} plays for {o} .", "he plays for {o} these days ."],
}


def plain(text: str) -> TokenSequence:
    toks = tokenize(text)
    return TokenSequence(ids=tuple(0 for _ in toks), surfaces=tuple(toks))


def toy_world(n_entities: int = 6) -> tuple[TripleStore, list[GroundedInstance]]:
    """A store plus grounded instances covering every triple twice."""
    entities = ENTITIES[:n_entities]
    triples = []
    for i, ent in enumerate(entities):
        triples.append((ent, "height", HEIGHTS[i % len(HEIGHTS)]))
        triples.append((ent, "team", TEAMS[i % len(TEAMS)]))
    store = TripleStore(triples)
    instances = []
    for i, ent in enumerate(entities):
        for pred, value in (("height", HEIGHTS[i % len(HEIGHTS)]), ("team", TEAMS[i % len(TEAMS)])):
            for k in range(2):
                q = QUESTION_TEMPLATES[pred][k % 2].format(s=ent)
                a = ANSWER_TEMPLATES[pred][(i + k) % 2].format(s=ent, o=value)
                inst = store.ground(plain(q), plain(a))
                assert inst is not None, (q, a)
                instances.append(inst)
    return store, instances


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        hidden_size=10,
        embed_size=6,
        question_vocab_size=60,
        answer_vocab_size=60,
        cnn_filter_width=2,
        cnn_feature_maps=5,
        cnn_mlp_hidden=6,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed: int = 0, **overrides) -> tuple[Model, list]:
    store, instances = toy_world()
    model = Model.build(tiny_config(**overrides), store, instances, seed=seed)
    dataset, dropped = model.prepare_dataset(instances)
    assert dropped == 0
    return model, dataset
