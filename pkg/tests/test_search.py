import itertools
import math

import numpy as np
import pytest

from genqa.decoder import KbEmission
from genqa.search import AnswerResult, BeamHypothesis, answer, beam_search, detokenize
from genqa.training import TrainingConfig, train
from genqa.vocab import EOS_ID

from helpers import tiny_model


def randomize(model, seed, scale=1.5):
    rng = np.random.default_rng(seed)
    for _, t in model.params.items():
        t.data[...] = rng.normal(scale=scale, size=t.shape)


def search_inputs(model, question="how tall is mira bel ?", with_kb=True):
    ts = model.question_vocab.encode_text(question)
    encoded = model.encode_question(ts)
    candidates = model.prepare_candidates(model.retrieve(ts))
    if with_kb and candidates and not model.kb_disabled:
        r = model.candidate_relevance(encoded, candidates).data
        kb = KbEmission.from_objects(
            [c.object_surface for c in candidates], model.answer_vocab
        )
        return encoded, kb, r
    return encoded, None, None


def enumerate_oracle(model, encoded, kb, r, max_len):
    """Best (uids, normalized score) over every complete sequence.

    Complete sequences end in EOS, or have exactly max_len tokens. EOS can
    only be final. Scores come from walking decode_step along the sequence.
    """
    decoder = model.decoder
    use_kb = not model.kb_disabled and kb is not None and len(kb) > 0 and r is not None
    vocab = decoder.vocab_size
    uids = list(range(vocab))
    unit_embed = {}
    if use_kb:
        for idx, unit in enumerate(kb.units):
            if unit.vocab_id is None:
                uids.append(vocab + idx)
                unit_embed[vocab + idx] = idx

    def step_prob(dist, uid):
        if uid < vocab:
            return float(dist.dense[uid])
        return dict(dist.extra).get(unit_embed[uid], 0.0)

    best = None
    for length in range(1, max_len + 1):
        for seq in itertools.product(uids, repeat=length):
            if any(u == EOS_ID for u in seq[:-1]):
                continue
            if length < max_len and seq[-1] != EOS_ID:
                continue
            state = decoder.start(encoded)
            logp = 0.0
            dead = False
            for uid in seq:
                dist, state = decoder.decode_step(
                    state, encoded, kb if use_kb else None,
                    r if use_kb else None, kb_disabled=not use_kb,
                )
                p = step_prob(dist, uid)
                if p <= 0.0:
                    dead = True
                    break
                logp += math.log(p)
                from genqa.vocab import UNK_ID

                embed_id = uid if uid < vocab else UNK_ID
                state = decoder.advanced_state(state, embed_id, uid >= vocab)
            if dead:
                continue
            key = (-(logp / length), seq)
            if best is None or key < best:
                best = key
    return best[1], -best[0]


def test_beam_width_one_is_greedy():
    model, _ = tiny_model(seed=20, answer_vocab_size=8)
    randomize(model, 99)
    encoded, kb, r = search_inputs(model)
    top = beam_search(model, encoded, kb, r, beam_width=1, max_len=4)[0]

    state = model.decoder.start(encoded)
    greedy = []
    logp = 0.0
    from genqa.vocab import UNK_ID

    for _ in range(4):
        dist, state = model.decoder.decode_step(state, encoded, kb, r)
        entries = list(enumerate(dist.dense)) + [
            (model.decoder.vocab_size + i, p) for i, p in dist.extra
        ]
        uid, p = max(entries, key=lambda e: (e[1], -e[0]))
        greedy.append(uid)
        logp += math.log(p)
        embed_id = uid if uid < model.decoder.vocab_size else UNK_ID
        state = model.decoder.advanced_state(state, embed_id, uid >= model.decoder.vocab_size)
        if uid == EOS_ID:
            break
    assert top.uid_sequence == tuple(greedy)
    assert top.log_prob == pytest.approx(logp, rel=1e-12)


def test_beam_matches_exhaustive_oracle_over_seeds():
    """Width-5 beam equals the enumeration argmax on 5-token-union toys."""
    model, _ = tiny_model(seed=21, answer_vocab_size=1)
    ablated = model.with_kb_disabled()
    assert ablated.decoder.vocab_size == 5
    for seed in range(100):
        randomize(ablated, seed)
        encoded, _, _ = search_inputs(ablated, with_kb=False)
        top = beam_search(ablated, encoded, None, None, beam_width=5, max_len=3)[0]
        oracle_seq, oracle_score = enumerate_oracle(ablated, encoded, None, None, 3)
        assert top.uid_sequence == oracle_seq, f"seed {seed}"
        assert top.normalized_score == pytest.approx(oracle_score, rel=1e-12)


def test_beam_matches_oracle_with_knowledge_units():
    model, _ = tiny_model(seed=22, answer_vocab_size=1)
    for seed in range(20):
        randomize(model, 1000 + seed)
        encoded, kb, r = search_inputs(model)
        assert kb is not None and len(kb) >= 1
        top = beam_search(model, encoded, kb, r, beam_width=5, max_len=3)[0]
        oracle_seq, _ = enumerate_oracle(model, encoded, kb, r, 3)
        assert top.uid_sequence == oracle_seq, f"seed {seed}"


def test_all_uniform_distributions_tie_break_lexicographically():
    model, _ = tiny_model(seed=23, answer_vocab_size=1)
    ablated = model.with_kb_disabled()
    for name, t in ablated.params.items():
        t.data[...] = 0.0
    encoded, _, _ = search_inputs(ablated, with_kb=False)
    top = beam_search(ablated, encoded, None, None, beam_width=5, max_len=3)[0]
    assert top.uid_sequence == (0, 0, 0)


def test_beam_top_at_least_greedy_when_greedy_in_space():
    model, _ = tiny_model(seed=24, answer_vocab_size=6)
    for seed in range(20):
        randomize(model, 2000 + seed)
        encoded, kb, r = search_inputs(model)
        greedy = beam_search(model, encoded, kb, r, beam_width=1, max_len=4)[0]
        wide = beam_search(model, encoded, kb, r, beam_width=4, max_len=4)
        if any(h.uid_sequence == greedy.uid_sequence for h in wide):
            assert wide[0].normalized_score >= greedy.normalized_score - 1e-12


def test_kb_words_carry_provenance_and_positive_switch():
    model, dataset = tiny_model(seed=25)
    train(model, dataset, TrainingConfig(learning_rate=1.0, batch_size=2, epochs=60, seed=0))
    result = answer(model, "how tall is mira bel ?")
    assert isinstance(result, AnswerResult)
    assert not result.ungrounded
    assert "1.71m" in result.answer
    words = {k.word for k in result.kb_words}
    assert "1.71m" in words
    for k in result.kb_words:
        assert k.subject == "mira bel"
    # every emitted knowledge word had positive switch probability
    hyp_tokens = [t for t in _top_tokens(model, "how tall is mira bel ?") if t.from_kb]
    assert hyp_tokens and all(t.switch > 0 and t.kb_share > 0 for t in hyp_tokens)


def _top_tokens(model, question):
    encoded, kb, r = search_inputs(model, question)
    return beam_search(
        model, encoded, kb, r, model.config.beam_width, model.config.max_answer_len
    )[0].tokens


def test_generalizes_to_unseen_fact():
    """Trained on templates, a question about a fact absent from training
    must still be answered with that fact's object (it is in the store)."""
    from genqa.kb import partition_by_triple

    from helpers import toy_world

    store, instances = toy_world()
    train_insts, test_insts = partition_by_triple(instances, 0.25, seed=4)
    from helpers import tiny_config
    from genqa.model import Model

    model = Model.build(tiny_config(hidden_size=16, embed_size=10), store, train_insts, seed=2)
    dataset, _ = model.prepare_dataset(train_insts)
    train(model, dataset, TrainingConfig(learning_rate=1.0, batch_size=2, epochs=80, seed=1))
    hits = 0
    for inst in test_insts:
        gold = store.triples[inst.gold_triple_id]
        res = answer(model, inst.question.text)
        hits += gold.object in res.answer
    assert hits / len(test_insts) >= 0.5


def test_unmentioned_subject_yields_ungrounded_answer():
    model, _ = tiny_model(seed=26)
    result = answer(model, "what is the meaning of life ?")
    assert result.ungrounded
    assert result.kb_words == ()


def test_answer_deterministic():
    model, dataset = tiny_model(seed=27)
    train(model, dataset, TrainingConfig(learning_rate=0.5, batch_size=4, epochs=5, seed=0))
    a = answer(model, "who does kato ven play for ?")
    b = answer(model, "who does kato ven play for ?")
    assert a == b


def test_detokenize_attaches_punctuation():
    assert detokenize(["he", "is", "2.29m", "tall", "."]) == "he is 2.29m tall."
