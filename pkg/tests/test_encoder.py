import numpy as np
import pytest

from genqa import tensor as T
from genqa.encoder import GRUCell, QuestionEncoder
from genqa.gradcheck import check_gradients


def make_encoder(seed=0, vocab=11, d_emb=6, d_hid=8):
    rng = np.random.default_rng(seed)
    return QuestionEncoder.create(rng, vocab, d_emb, d_hid, np.float64)


def test_encode_shapes():
    enc = make_encoder()
    out = enc.encode([4, 5, 6, 7, 8])
    assert out.states.shape == (5, 16)
    assert out.embeds.shape == (5, 6)
    assert out.ids == (4, 5, 6, 7, 8)


def test_encode_rejects_empty():
    with pytest.raises(ValueError):
        make_encoder().encode([])


def test_single_token_is_one_step_from_zero_state():
    enc = make_encoder(seed=3)
    out = enc.encode([5])
    x = T.row(T.take_rows(enc.embed, [5]), 0)
    zero = T.Tensor(np.zeros(8))
    fwd = enc.forward.step(x, zero)
    bwd = enc.backward.step(x, zero)
    np.testing.assert_allclose(out.states.data[0, :8], fwd.data, rtol=1e-12)
    np.testing.assert_allclose(out.states.data[0, 8:], bwd.data, rtol=1e-12)


def test_reversed_question_swaps_directions():
    """Encoding the reversed sequence with swapped fwd/bwd cells must produce
    the original backward states, read in reverse, as its forward states."""
    enc = make_encoder(seed=9)
    swapped = QuestionEncoder(enc.embed, enc.backward, enc.forward)
    ids = [4, 6, 9, 5]
    base = enc.encode(ids)
    rev = swapped.encode(ids[::-1])
    h = enc.forward.hidden_size
    np.testing.assert_allclose(
        rev.states.data[::-1, :h], base.states.data[:, h:], rtol=1e-12
    )


def test_states_bounded_by_tanh_gating():
    enc = make_encoder(seed=1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ids = rng.integers(0, 11, size=rng.integers(1, 9)).tolist()
        out = enc.encode(ids)
        assert (np.abs(out.states.data) < 1.0).all()


def test_deterministic_encoding():
    enc = make_encoder(seed=2)
    a = enc.encode([1, 2, 3]).states.data
    b = enc.encode([1, 2, 3]).states.data
    assert (a == b).all()


def test_encoder_gradients_match_finite_differences():
    enc = make_encoder(seed=4, vocab=7, d_emb=3, d_hid=4)
    ids = [1, 4, 2, 6]
    slots = enc.slots()
    probe = T.Tensor(np.random.default_rng(5).normal(size=(4, 8)))

    def forward():
        out = enc.encode(ids)
        return T.sum_all(T.tanh(out.states * probe)) + T.mean_all(out.embeds)

    with T.Tape() as tape:
        loss = forward()
    grads = T.backward(tape, loss)
    analytic = {name: grads[t] for name, t in slots.items()}
    check_gradients(lambda: forward().item(), analytic, slots)
