from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from genqa.vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    RESERVED,
    UNK_ID,
    Vocabulary,
    build_vocab,
    tokenize,
)


def test_tokenize_detaches_punctuation_and_lowercases():
    assert tokenize("How tall is Yao Ming?") == ["how", "tall", "is", "yao", "ming", "?"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_keeps_interior_punctuation():
    assert tokenize("He is 2.29m tall.") == ["he", "is", "2.29m", "tall", "."]
    assert tokenize("don't stop") == ["don't", "stop"]


words = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Nd"), whitelist_characters=".?!,'"),
    min_size=1,
    max_size=8,
)


@given(st.lists(words, max_size=20))
def test_tokenize_idempotent(parts):
    text = " ".join(parts)
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_reserved_ids_fixed():
    v = Vocabulary(["a"])
    assert (UNK_ID, BOS_ID, EOS_ID, PAD_ID) == (0, 1, 2, 3)
    assert v.decode([0, 1, 2, 3]) == list(RESERVED)
    assert v.id_of("a") == 4


def test_build_vocab_most_frequent():
    v = build_vocab([["a", "a", "b"]], size=1)
    assert "a" in v and "b" not in v
    assert len(v) == len(RESERVED) + 1


def test_build_vocab_must_include_even_at_zero_frequency():
    v = build_vocab([["a", "b"]], size=2, must_include={"height"})
    assert "height" in v


def test_build_vocab_rejects_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab([], size=5)


def test_build_vocab_matches_count_and_sort_oracle():
    import random

    rnd = random.Random(0)
    corpus = [[rnd.choice("abcdefghij") for _ in range(20)] for _ in range(50)]
    flat = [t for doc in corpus for t in doc]
    counts = Counter(flat)
    first = {}
    for i, t in enumerate(flat):
        first.setdefault(t, i)
    expected = sorted(counts, key=lambda t: (-counts[t], first[t]))[:6]
    v = build_vocab(corpus, size=6)
    assert v.tokens == expected


def test_encode_unknown_maps_to_unk_but_keeps_surface():
    v = build_vocab([["known"]], size=1)
    ts = v.encode(["known", "mystery"])
    assert ts.ids == (v.id_of("known"), UNK_ID)
    assert ts.surfaces == ("known", "mystery")


def test_encode_decode_round_trip_in_vocab():
    v = build_vocab([["x", "y", "z"]], size=3)
    ts = v.encode(["z", "x", "y"])
    assert v.decode(ts.ids) == ["z", "x", "y"]


def test_vocabularies_are_independent_objects():
    q = build_vocab([["who", "is"]], size=2)
    a = build_vocab([["he", "is"]], size=2)
    assert q.tokens != a.tokens
    assert q.id_of("who") != UNK_ID
    assert a.id_of("who") == UNK_ID


def test_save_load_round_trip(tmp_path):
    v = build_vocab([["alpha", "beta", "beta"]], size=2, must_include={"gamma"})
    path = tmp_path / "vocab.txt"
    v.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.tokens == v.tokens
    assert loaded.id_of("beta") == v.id_of("beta")
    # line number = id offset by reserved count
    lines = path.read_text().splitlines()
    assert lines[v.id_of("gamma") - len(RESERVED)] == "gamma"
